// Copyright 2026, the radarplace authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rpr/ego_motion.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

#include "rpr/rng.hpp"

namespace rpr::ego {

namespace {

constexpr double kMaxConditionNumber = 1e12;

/// Accumulates the 3x3 normal equations from unit directions and solves
/// v = -(P^T P)^{-1} P^T v_d. Returns false on degenerate geometry.
bool solve_normal_equations(const Eigen::Matrix3d& ptp,
                            const Eigen::Vector3d& ptv, Eigen::Vector3d& out) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(ptp);
  const double lmin = es.eigenvalues()(0);
  const double lmax = es.eigenvalues()(2);
  if (!(lmin > 0.0) || lmax >= kMaxConditionNumber * lmin) return false;
  out = -ptp.ldlt().solve(ptv);
  return out.allFinite();
}

struct Directions {
  Eigen::Matrix3d ptp = Eigen::Matrix3d::Zero();
  Eigen::Vector3d ptv = Eigen::Vector3d::Zero();
};

void accumulate_point(Directions& d, const RadarPoint& p) {
  const double r = norm(p.position);
  if (!(r > 0.0)) throw ValidationError("radar point at sensor origin");
  const Eigen::Vector3d u(p.position[0] / r, p.position[1] / r,
                          p.position[2] / r);
  d.ptp.noalias() += u * u.transpose();
  d.ptv.noalias() += u * p.radial_velocity;
}

}  // namespace

Vec3 solve_ego_velocity(std::span<const RadarPoint> points) {
  if (points.size() < 3)
    throw InsufficientPointsError("ego-velocity needs at least 3 points, got " +
                                  std::to_string(points.size()));
  Directions d;
  for (const auto& p : points) accumulate_point(d, p);
  Eigen::Vector3d v;
  if (!solve_normal_equations(d.ptp, d.ptv, v))
    throw DegenerateGeometryError(
        "direction matrix is rank deficient or ill conditioned");
  return {v(0), v(1), v(2)};
}

EgoEstimate ransac_ego_velocity(const RadarScan& scan,
                                const RansacConfig& config) {
  const size_t n = scan.points.size();
  if (n < 3)
    throw InsufficientPointsError("RANSAC needs at least 3 points, got " +
                                  std::to_string(n));
  if (config.max_iterations < 1)
    throw ValidationError("max_iterations must be >= 1");
  if (!(config.inlier_threshold > 0.0))
    throw ValidationError("inlier_threshold must be > 0");

  // Precompute unit directions once; residual scoring is the hot loop.
  std::vector<Eigen::Vector3d> dirs(n);
  std::vector<double> vd(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& p = scan.points[i];
    const double r = norm(p.position);
    if (!(r > 0.0)) throw ValidationError("radar point at sensor origin");
    dirs[i] = Eigen::Vector3d(p.position[0] / r, p.position[1] / r,
                              p.position[2] / r);
    vd[i] = p.radial_velocity;
  }
  const auto residual = [&](const Eigen::Vector3d& v, size_t i) {
    // predicted v_d = u^T(-v); residual against the observed value.
    return std::abs(dirs[i].dot(v) + vd[i]);
  };

  Rng rng(config.seed);
  int best_count = -1;
  double best_mean = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_v = Eigen::Vector3d::Zero();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    size_t idx[3];
    idx[0] = rng.uniform_index(n);
    do {
      idx[1] = rng.uniform_index(n);
    } while (idx[1] == idx[0]);
    do {
      idx[2] = rng.uniform_index(n);
    } while (idx[2] == idx[0] || idx[2] == idx[1]);

    Directions d;
    for (size_t j : idx) accumulate_point(d, scan.points[j]);
    Eigen::Vector3d v;
    if (!solve_normal_equations(d.ptp, d.ptv, v)) continue;

    int count = 0;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double r = residual(v, i);
      if (r <= config.inlier_threshold) {
        ++count;
        sum += r;
      }
    }
    if (count == 0) continue;
    const double mean = sum / count;
    if (count > best_count || (count == best_count && mean < best_mean)) {
      best_count = count;
      best_mean = mean;
      best_v = v;
    }
  }

  const double required =
      std::max(3.0, config.min_inlier_fraction * static_cast<double>(n));
  if (best_count < required)
    throw EstimationFailedError(
        "no consensus: best inlier count " + std::to_string(best_count) +
        " below required " + std::to_string(required));

  // Refit on the consensus set, then classify against the refit model so the
  // residual bound holds for every mask-true point.
  std::vector<RadarPoint> consensus;
  consensus.reserve(static_cast<size_t>(best_count));
  for (size_t i = 0; i < n; ++i)
    if (residual(best_v, i) <= config.inlier_threshold)
      consensus.push_back(scan.points[i]);
  Vec3 refined;
  try {
    refined = solve_ego_velocity(consensus);
  } catch (const ValidationError&) {
    throw EstimationFailedError("consensus set is degenerate");
  }
  const Eigen::Vector3d vref(refined[0], refined[1], refined[2]);

  EgoEstimate est;
  est.velocity = refined;
  est.inlier_mask.resize(n, false);
  est.n_iterations_used = config.max_iterations;
  int final_count = 0;
  double final_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = residual(vref, i);
    if (r <= config.inlier_threshold) {
      est.inlier_mask[i] = true;
      ++final_count;
      final_sum += r;
    }
  }
  if (final_count < required)
    throw EstimationFailedError("refit lost consensus");
  est.mean_inlier_residual = final_sum / final_count;
  return est;
}

RadarScan remove_dynamic(const RadarScan& scan, const std::vector<bool>& mask) {
  if (mask.size() != scan.points.size())
    throw ValidationError("mask length " + std::to_string(mask.size()) +
                          " does not match point count " +
                          std::to_string(scan.points.size()));
  RadarScan out;
  out.timestamp = scan.timestamp;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.points.push_back(scan.points[i]);
  return out;
}

}  // namespace rpr::ego

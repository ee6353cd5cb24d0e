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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rpr/types.hpp"

// Ego-velocity estimation from a single scan's radial velocities. A static
// point's radial velocity is the line-of-sight projection of the negated
// sensor velocity, so stacking the unit directions of N static points gives
// a linear system solved in least squares; RANSAC separates moving objects
// as outliers first.

namespace rpr::ego {

class InsufficientPointsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class DegenerateGeometryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class EstimationFailedError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct EgoEstimate {
  Vec3 velocity{0.0, 0.0, 0.0};
  std::vector<bool> inlier_mask;  // true = static
  int n_iterations_used = 0;
  double mean_inlier_residual = 0.0;
};

struct RansacConfig {
  int max_iterations = 100;
  double inlier_threshold = 0.15;   // m/s
  double min_inlier_fraction = 0.3;
  uint64_t seed = 0;
};

/// Least-squares ego-velocity from points assumed static, via the 3x3 normal
/// equations with a pivoted LDLT factorization. Throws
/// InsufficientPointsError (< 3 points) or DegenerateGeometryError (direction
/// matrix condition number >= 1e12).
Vec3 solve_ego_velocity(std::span<const RadarPoint> points);

/// Predicted radial velocity of a static point under ego velocity v.
inline double predicted_radial_velocity(const RadarPoint& p, const Vec3& v) {
  const double r = norm(p.position);
  return -(p.position[0] * v[0] + p.position[1] * v[1] + p.position[2] * v[2]) / r;
}

/// RANSAC over 3-point minimal samples; the consensus-maximizing model is
/// refit on its inliers and the final mask is taken under the refit model.
/// Equal consensus sizes break toward the lower mean inlier residual.
/// Deterministic given (scan, config). Throws EstimationFailedError when the
/// best consensus is below max(3, min_inlier_fraction * n).
EgoEstimate ransac_ego_velocity(const RadarScan& scan, const RansacConfig& config);

/// Keeps mask-true points, order preserved.
RadarScan remove_dynamic(const RadarScan& scan, const std::vector<bool>& mask);

}  // namespace rpr::ego

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

#include "rpr/sim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rpr/errors.hpp"
#include "rpr/rng.hpp"

namespace rpr::sim {

using nlohmann::json;

void WorldConfig::validate() const {
  if (n_landmarks < 0 || n_dynamic_agents < 0 || points_per_scan < 0)
    throw ValidationError("world counts must be >= 0");
  if (noise_sigma_v < 0.0 || noise_sigma_pos < 0.0)
    throw ValidationError("noise sigmas must be >= 0");
  if (!(sensor_fov.max_range > 0.0))
    throw ValidationError("max_range must be > 0");
  if (ghost_fraction < 0.0) throw ValidationError("ghost_fraction must be >= 0");
  if (region_x[1] < region_x[0] || region_y[1] < region_y[0] ||
      region_z[1] < region_z[0])
    throw ValidationError("landmark region is inverted");
}

namespace {

constexpr double kRcsMin = 0.0;
constexpr double kRcsMax = 30.0;
constexpr double kTwoPi = 6.283185307179586476925286766559;

Vec3 to_sensor_frame(const Vec3& world, const Pose& pose) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const Vec3 d = sub(world, pose.translation);
  // R(-yaw) applied to the planar components.
  return {c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]};
}

Vec3 rotate_to_body(const Vec3& world_vec, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * world_vec[0] + s * world_vec[1],
          -s * world_vec[0] + c * world_vec[1], world_vec[2]};
}

bool in_fov(const Vec3& sensor_pos, const FovConfig& fov) {
  const double r = norm(sensor_pos);
  if (!(r > 0.0) || r > fov.max_range) return false;
  const double az = std::atan2(sensor_pos[1], sensor_pos[0]);
  return std::abs(az) <= fov.azimuth_half_angle;
}

struct Candidate {
  Vec3 sensor_pos;   // true geometry
  double v_d = 0.0;  // exact radial velocity
  double rcs = 0.0;
  bool dynamic = false;
};

}  // namespace

World generate_world(const WorldConfig& config) {
  config.validate();
  World w;
  Rng lm_rng = Rng::stream(config.seed, "landmarks");
  w.landmarks.reserve(static_cast<size_t>(config.n_landmarks));
  for (int i = 0; i < config.n_landmarks; ++i) {
    Scatterer s;
    s.position = {lm_rng.uniform(config.region_x[0], config.region_x[1]),
                  lm_rng.uniform(config.region_y[0], config.region_y[1]),
                  lm_rng.uniform(config.region_z[0], config.region_z[1])};
    s.rcs = lm_rng.uniform(kRcsMin, kRcsMax);
    w.landmarks.push_back(s);
  }
  respawn_agents(w, config, config.seed);
  return w;
}

void respawn_agents(World& world, const WorldConfig& config, uint64_t agent_seed) {
  Rng rng = Rng::stream(agent_seed, "agents");
  world.agents.clear();
  world.agents.reserve(static_cast<size_t>(config.n_dynamic_agents));
  for (int i = 0; i < config.n_dynamic_agents; ++i) {
    Agent a;
    a.position = {rng.uniform(config.region_x[0], config.region_x[1]),
                  rng.uniform(config.region_y[0], config.region_y[1]),
                  rng.uniform(config.region_z[0], config.region_z[1])};
    const double speed =
        rng.uniform(config.agent_speed_range[0], config.agent_speed_range[1]);
    const double heading = rng.uniform(0.0, kTwoPi);
    a.velocity = {speed * std::cos(heading), speed * std::sin(heading), 0.0};
    a.rcs = rng.uniform(kRcsMin, kRcsMax);
    world.agents.push_back(a);
  }
}

SimFrame render_scan(const World& world, const Pose& pose,
                     const Vec3& ego_velocity_body, const WorldConfig& config,
                     uint64_t frame_index, double time) {
  config.validate();
  for (double c : pose.translation)
    if (!std::isfinite(c)) throw ValidationError("render_scan: non-finite pose");

  // Candidates in canonical order: landmarks then agents, by index.
  std::vector<Candidate> candidates;
  candidates.reserve(world.landmarks.size() + world.agents.size());
  for (const auto& lm : world.landmarks) {
    const Vec3 ps = to_sensor_frame(lm.position, pose);
    if (!in_fov(ps, config.sensor_fov)) continue;
    const double r = norm(ps);
    // Static scatterer: relative velocity in the body frame is -v_ego.
    const double vd = -dot(ps, ego_velocity_body) / r;
    candidates.push_back({ps, vd, lm.rcs, false});
  }
  for (const auto& ag : world.agents) {
    const Vec3 pos_t = {ag.position[0] + ag.velocity[0] * time,
                        ag.position[1] + ag.velocity[1] * time,
                        ag.position[2] + ag.velocity[2] * time};
    const Vec3 ps = to_sensor_frame(pos_t, pose);
    if (!in_fov(ps, config.sensor_fov)) continue;
    const double r = norm(ps);
    const Vec3 v_rel = sub(rotate_to_body(ag.velocity, pose.yaw), ego_velocity_body);
    const double vd = dot(ps, v_rel) / r;
    candidates.push_back({ps, vd, ag.rcs, true});
  }

  Rng rng = Rng::stream(config.seed, "frame", frame_index);
  std::vector<size_t> kept;
  if (static_cast<int>(candidates.size()) > config.points_per_scan) {
    kept = rng.sample_without_replacement(
        candidates.size(), static_cast<size_t>(config.points_per_scan));
  } else {
    kept.resize(candidates.size());
    for (size_t i = 0; i < kept.size(); ++i) kept[i] = i;
  }

  SimFrame frame;
  frame.pose = pose;
  frame.ego_velocity = ego_velocity_body;
  frame.scan.timestamp = time;
  for (size_t i : kept) {
    const Candidate& c = candidates[i];
    RadarPoint p;
    p.position = c.sensor_pos;
    if (config.noise_sigma_pos > 0.0) {
      p.position[0] += rng.normal(0.0, config.noise_sigma_pos);
      p.position[1] += rng.normal(0.0, config.noise_sigma_pos);
      p.position[2] += rng.normal(0.0, config.noise_sigma_pos);
    }
    p.radial_velocity = c.v_d;
    if (config.noise_sigma_v > 0.0)
      p.radial_velocity += rng.normal(0.0, config.noise_sigma_v);
    p.rcs = c.rcs;
    if (!in_fov(p.position, config.sensor_fov)) continue;  // noise pushed it out
    frame.scan.points.push_back(p);
    frame.dynamic_mask.push_back(c.dynamic);
  }

  // Multipath ghosts: uniform clutter inside the FOV cone with random
  // radial velocity, labeled dynamic.
  const int n_ghosts = static_cast<int>(
      std::llround(config.ghost_fraction *
                   static_cast<double>(frame.scan.points.size())));
  const double rho_max = 0.95 * config.sensor_fov.max_range;
  for (int g = 0; g < n_ghosts; ++g) {
    const double az = rng.uniform(-config.sensor_fov.azimuth_half_angle,
                                  config.sensor_fov.azimuth_half_angle);
    const double rho = rng.uniform(2.0, rho_max > 2.0 ? rho_max : 2.0);
    RadarPoint p;
    p.position = {rho * std::cos(az), rho * std::sin(az), rng.uniform(-1.0, 3.0)};
    p.radial_velocity = rng.uniform(-8.0, 8.0);
    p.rcs = rng.uniform(kRcsMin, kRcsMax);
    if (!in_fov(p.position, config.sensor_fov)) continue;
    frame.scan.points.push_back(p);
    frame.dynamic_mask.push_back(true);
  }
  return frame;
}

std::pair<ScanSequence, std::vector<SimFrame>> generate_sequence(
    const World& world, const std::vector<TrajectorySample>& trajectory,
    const WorldConfig& config, double frame_rate_hz) {
  if (trajectory.empty()) throw ValidationError("trajectory must be non-empty");
  if (!(frame_rate_hz > 0.0)) throw ValidationError("frame_rate must be > 0");
  ScanSequence seq;
  seq.frame_rate_hz = frame_rate_hz;
  std::vector<SimFrame> frames;
  frames.reserve(trajectory.size());
  for (size_t i = 0; i < trajectory.size(); ++i) {
    const double t = static_cast<double>(i) / frame_rate_hz;
    SimFrame f = render_scan(world, trajectory[i].pose,
                             trajectory[i].ego_velocity_body, config, i, t);
    f.scan.timestamp = t;
    seq.frames.push_back({f.scan, f.pose});
    frames.push_back(std::move(f));
  }
  validate_sequence(seq);
  return {std::move(seq), std::move(frames)};
}

std::vector<TrajectorySample> straight_trajectory(const Pose& start,
                                                  const Vec3& velocity_body,
                                                  int n_frames,
                                                  double frame_rate_hz,
                                                  double yaw_rate) {
  if (n_frames < 1) throw ValidationError("trajectory needs >= 1 frame");
  if (!(frame_rate_hz > 0.0)) throw ValidationError("frame_rate must be > 0");
  std::vector<TrajectorySample> out;
  out.reserve(static_cast<size_t>(n_frames));
  Pose pose = start;
  const double dt = 1.0 / frame_rate_hz;
  for (int i = 0; i < n_frames; ++i) {
    out.push_back({pose, velocity_body});
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    pose.translation[0] += (c * velocity_body[0] - s * velocity_body[1]) * dt;
    pose.translation[1] += (s * velocity_body[0] + c * velocity_body[1]) * dt;
    pose.translation[2] += velocity_body[2] * dt;
    pose.yaw = wrap_angle(pose.yaw + yaw_rate * dt);
  }
  return out;
}

std::vector<int> mask_to_rle(const std::vector<bool>& mask) {
  std::vector<int> rle;
  bool current = false;  // runs start with the false value
  int run = 0;
  for (bool b : mask) {
    if (b == current) {
      ++run;
    } else {
      rle.push_back(run);
      current = b;
      run = 1;
    }
  }
  rle.push_back(run);
  return rle;
}

std::vector<bool> rle_to_mask(const std::vector<int>& rle) {
  std::vector<bool> mask;
  bool current = false;
  for (int run : rle) {
    if (run < 0) throw ValidationError("negative RLE run length");
    mask.insert(mask.end(), static_cast<size_t>(run), current);
    current = !current;
  }
  return mask;
}

void write_labels(const std::vector<SimFrame>& frames,
                  const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& f : frames) {
    arr.push_back({{"ego_velocity",
                    {f.ego_velocity[0], f.ego_velocity[1], f.ego_velocity[2]}},
                   {"dynamic_rle", mask_to_rle(f.dynamic_mask)}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << json{{"frames", arr}}.dump(2) << "\n";
  if (!out.good()) throw IoError("write failed: " + path.string());
}

std::vector<FrameLabels> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bad labels file " + path.string() + ": " + e.what());
  }
  std::vector<FrameLabels> out;
  try {
    for (const auto& fj : j.at("frames")) {
      FrameLabels l;
      const auto v = fj.at("ego_velocity").get<std::vector<double>>();
      if (v.size() != 3) throw ValidationError("ego_velocity must have 3 entries");
      l.ego_velocity = {v[0], v[1], v[2]};
      l.dynamic_mask = rle_to_mask(fj.at("dynamic_rle").get<std::vector<int>>());
      out.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad labels file " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace rpr::sim

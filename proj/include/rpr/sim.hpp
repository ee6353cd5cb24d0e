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

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "rpr/types.hpp"

// Deterministic synthetic radar world: point-scatterer landmarks, constant
// velocity agents, optional multipath ghosts. Radial velocities follow the
// line-of-sight projection of relative velocity exactly, which makes rendered
// frames the oracle for every downstream module.

namespace rpr::sim {

struct FovConfig {
  double max_range = 60.0;           // meters
  double azimuth_half_angle = 1.2;   // radians, planar
};

struct WorldConfig {
  uint64_t seed = 0;
  int n_landmarks = 0;
  std::array<double, 2> region_x{-50.0, 50.0};
  std::array<double, 2> region_y{-50.0, 50.0};
  std::array<double, 2> region_z{-1.0, 6.0};
  int n_dynamic_agents = 0;
  std::array<double, 2> agent_speed_range{1.0, 5.0};
  double noise_sigma_v = 0.0;    // m/s
  double noise_sigma_pos = 0.0;  // meters
  int points_per_scan = 256;
  FovConfig sensor_fov;
  double ghost_fraction = 0.0;   // multipath ghosts per kept return

  void validate() const;
};

struct Scatterer {
  Vec3 position{0.0, 0.0, 0.0};
  double rcs = 0.0;
};

struct Agent {
  Vec3 position{0.0, 0.0, 0.0};  // at t = 0
  Vec3 velocity{0.0, 0.0, 0.0};  // world frame, planar
  double rcs = 0.0;
};

struct World {
  std::vector<Scatterer> landmarks;
  std::vector<Agent> agents;
};

struct SimFrame {
  RadarScan scan;
  Pose pose;
  Vec3 ego_velocity{0.0, 0.0, 0.0};  // body frame ground truth
  std::vector<bool> dynamic_mask;    // true = moving object or ghost
};

/// Deterministic function of config.seed; landmarks uniform in the region
/// box with per-scatterer RCS fixed for the world's lifetime.
World generate_world(const WorldConfig& config);

/// Re-randomizes agent states only (positions, headings, speeds); landmarks
/// are untouched. Distinct traversals of one world use distinct agent seeds.
void respawn_agents(World& world, const WorldConfig& config, uint64_t agent_seed);

/// Renders one frame from the given pose. ego_velocity is expressed in the
/// body frame. Noise and subsampling draw from a stream derived from
/// (config.seed, frame_index), so frames can render in any order or in
/// parallel with identical results. `time` advances agent positions.
SimFrame render_scan(const World& world, const Pose& pose,
                     const Vec3& ego_velocity_body, const WorldConfig& config,
                     uint64_t frame_index = 0, double time = 0.0);

struct TrajectorySample {
  Pose pose;
  Vec3 ego_velocity_body{0.0, 0.0, 0.0};
};

/// One frame per trajectory sample, timestamps spaced 1/frame_rate.
std::pair<ScanSequence, std::vector<SimFrame>> generate_sequence(
    const World& world, const std::vector<TrajectorySample>& trajectory,
    const WorldConfig& config, double frame_rate_hz);

/// Straight constant-velocity run: poses step by R(yaw) * v_body / f_r.
std::vector<TrajectorySample> straight_trajectory(const Pose& start,
                                                  const Vec3& velocity_body,
                                                  int n_frames,
                                                  double frame_rate_hz,
                                                  double yaw_rate = 0.0);

// labels.json: per-frame body-frame ego velocity and the dynamic mask as
// run-length encoding [n_false, n_true, n_false, ...].
void write_labels(const std::vector<SimFrame>& frames,
                  const std::filesystem::path& path);
struct FrameLabels {
  Vec3 ego_velocity{0.0, 0.0, 0.0};
  std::vector<bool> dynamic_mask;
};
std::vector<FrameLabels> read_labels(const std::filesystem::path& path);

std::vector<int> mask_to_rle(const std::vector<bool>& mask);
std::vector<bool> rle_to_mask(const std::vector<int>& rle);

}  // namespace rpr::sim

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
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rpr/errors.hpp"

namespace rpr {

using Vec3 = std::array<double, 3>;

inline double norm(const Vec3& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

inline Vec3 sub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

/// One radar return. Position is in the sensor frame (x forward, y left,
/// z up, meters). radial_velocity is the signed speed along the line of
/// sight, positive = receding. rcs in dBsm.
struct RadarPoint {
  Vec3 position{0.0, 0.0, 0.0};
  double radial_velocity = 0.0;
  double rcs = 0.0;
};

inline bool point_valid(const RadarPoint& p) {
  for (double c : p.position)
    if (!std::isfinite(c)) return false;
  if (!std::isfinite(p.radial_velocity) || !std::isfinite(p.rcs)) return false;
  return norm(p.position) > 0.0;
}

/// One frame of radar returns. Point count may be zero; radar scans are
/// expected to be sparse.
struct RadarScan {
  std::vector<RadarPoint> points;
  double timestamp = 0.0;
};

/// Throws ValidationError if any point is invalid or the timestamp is not finite.
void validate_scan(const RadarScan& scan);

/// Planar ground-truth pose: translation plus yaw. Used by the simulator and
/// by evaluation; never an input to the descriptor pipeline.
struct Pose {
  Vec3 translation{0.0, 0.0, 0.0};
  double yaw = 0.0;  // radians, in (-pi, pi]
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

/// Planar (x, y) distance between two poses.
inline double planar_distance(const Pose& a, const Pose& b) {
  const double dx = a.translation[0] - b.translation[0];
  const double dy = a.translation[1] - b.translation[1];
  return std::sqrt(dx * dx + dy * dy);
}

/// Ordered frames with strictly increasing timestamps.
struct ScanSequence {
  struct Frame {
    RadarScan scan;
    std::optional<Pose> pose;
  };
  std::vector<Frame> frames;
  double frame_rate_hz = 10.0;
};

/// Throws ValidationError on non-monotonic timestamps or frame_rate <= 0.
void validate_sequence(const ScanSequence& seq);

constexpr int kDescriptorDim = 256;

/// 256-D global place descriptor.
struct Descriptor {
  std::vector<double> values;

  Descriptor() : values(kDescriptorDim, 0.0) {}
  explicit Descriptor(std::vector<double> v);
};

double descriptor_distance(const Descriptor& a, const Descriptor& b);

}  // namespace rpr

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

#include "rpr/types.hpp"

#include <string>

namespace rpr {

void validate_scan(const RadarScan& scan) {
  if (!std::isfinite(scan.timestamp))
    throw ValidationError("scan timestamp is not finite");
  for (size_t i = 0; i < scan.points.size(); ++i) {
    if (!point_valid(scan.points[i]))
      throw ValidationError("invalid radar point at index " + std::to_string(i));
  }
}

double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

void validate_sequence(const ScanSequence& seq) {
  if (!(seq.frame_rate_hz > 0.0)) throw ValidationError("frame_rate must be > 0");
  for (size_t i = 1; i < seq.frames.size(); ++i) {
    if (!(seq.frames[i].scan.timestamp > seq.frames[i - 1].scan.timestamp))
      throw ValidationError("sequence timestamps must strictly increase (frame " +
                            std::to_string(i) + ")");
  }
}

Descriptor::Descriptor(std::vector<double> v) : values(std::move(v)) {
  if (values.size() != kDescriptorDim)
    throw ValidationError("descriptor must have dimension " +
                          std::to_string(kDescriptorDim) + ", got " +
                          std::to_string(values.size()));
  for (double x : values)
    if (!std::isfinite(x)) throw ValidationError("descriptor contains non-finite value");
}

double descriptor_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace rpr

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

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "rpr/tensor.hpp"
#include "rpr/types.hpp"

namespace rpr::io {

// Scan CSV: UTF-8, header "x,y,z,v_d,rcs", one float row per point, LF
// line endings, 17 significant digits on write (lossless for float64).

RadarScan read_scan(const std::filesystem::path& path);
void write_scan(const RadarScan& scan, const std::filesystem::path& path);

// Sequence manifest JSON:
//   { "frame_rate_hz": <float>,
//     "frames": [ { "t": <seconds>, "scan": "<relative path>",
//                   "pose": {"x":..,"y":..,"z":..,"yaw":..} | null } ] }
ScanSequence load_sequence(const std::filesystem::path& manifest_path);
void save_sequence(const ScanSequence& seq, const std::filesystem::path& dir);

nlohmann::json pose_to_json(const Pose& p);
Pose pose_from_json(const nlohmann::json& j);

/// Named, shape-immutable tensor collection: the model's trainable state.
class ParameterStore {
 public:
  /// Adds a tensor under a unique name. The tensor is marked trainable.
  nn::Tensor& add(const std::string& name, nn::Tensor t);
  nn::Tensor& get(const std::string& name);
  const nn::Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return items_.count(name) != 0; }
  size_t size() const { return items_.size(); }
  std::vector<std::string> names() const;
  void zero_grad();

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::map<std::string, nn::Tensor> items_;
};

// Parameter file: little-endian binary. Layout:
//   magic "RSPR" | u32 version=1 | u64 header length | header JSON |
//   payload (raw f64) | u32 CRC32 of payload
// The header maps tensor names to shape/dtype/byte-offset and carries an
// optional "meta" object (the model configuration rides there).
void save_parameters(const ParameterStore& store,
                     const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
ParameterStore load_parameters(const std::filesystem::path& path,
                               nlohmann::json* meta_out = nullptr);

}  // namespace rpr::io

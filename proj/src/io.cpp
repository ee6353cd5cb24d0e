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

#include "rpr/io.hpp"

#include <zlib.h>

#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rpr::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kScanHeader = "x,y,z,v_d,rcs";

double parse_double(std::string_view field, long line) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ParseError("not a float literal: '" + std::string(field) + "'", line);
  return v;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<size_t>(len));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out.good()) throw IoError("write failed: " + path.string());
}

}  // namespace

RadarScan read_scan(const fs::path& path) {
  const std::string content = read_file(path);
  RadarScan scan;
  size_t pos = 0;
  long line_no = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line(content.data() + pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line_no == 1) {
      if (line != kScanHeader)
        throw ParseError("expected header '" + std::string(kScanHeader) + "'",
                         line_no);
    } else if (!line.empty()) {
      RadarPoint p;
      double fields[5];
      size_t f = 0, start = 0;
      for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
          if (f >= 5) throw ParseError("expected 5 fields", line_no);
          fields[f++] = parse_double(line.substr(start, i - start), line_no);
          start = i + 1;
        }
      }
      if (f != 5) throw ParseError("expected 5 fields", line_no);
      p.position = {fields[0], fields[1], fields[2]};
      p.radial_velocity = fields[3];
      p.rcs = fields[4];
      if (!point_valid(p))
        throw ValidationError(path.string() + ": invalid point at line " +
                              std::to_string(line_no));
      scan.points.push_back(p);
    }
    pos = eol + 1;
  }
  if (line_no == 0) throw ParseError("missing header", 1);
  return scan;
}

void write_scan(const RadarScan& scan, const fs::path& path) {
  validate_scan(scan);
  std::string out;
  out.reserve(32 * scan.points.size() + 16);
  out += kScanHeader;
  out += '\n';
  for (const auto& p : scan.points) {
    append_double(out, p.position[0]);
    out += ',';
    append_double(out, p.position[1]);
    out += ',';
    append_double(out, p.position[2]);
    out += ',';
    append_double(out, p.radial_velocity);
    out += ',';
    append_double(out, p.rcs);
    out += '\n';
  }
  write_file(path, out);
}

json pose_to_json(const Pose& p) {
  return json{{"x", p.translation[0]},
              {"y", p.translation[1]},
              {"z", p.translation[2]},
              {"yaw", p.yaw}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  p.translation = {j.at("x").get<double>(), j.at("y").get<double>(),
                   j.at("z").get<double>()};
  p.yaw = j.at("yaw").get<double>();
  if (!std::isfinite(p.yaw) || p.yaw != wrap_angle(p.yaw))
    throw ValidationError("pose yaw must be finite and in (-pi, pi]");
  return p;
}

ScanSequence load_sequence(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ValidationError("bad manifest " + manifest_path.string() + ": " +
                          e.what());
  }
  ScanSequence seq;
  try {
    seq.frame_rate_hz = manifest.at("frame_rate_hz").get<double>();
    const fs::path base = manifest_path.parent_path();
    for (const auto& fj : manifest.at("frames")) {
      ScanSequence::Frame frame;
      const fs::path scan_path = base / fj.at("scan").get<std::string>();
      if (!fs::exists(scan_path))
        throw IoError("missing scan file: " + scan_path.string());
      frame.scan = read_scan(scan_path);
      frame.scan.timestamp = fj.at("t").get<double>();
      if (fj.contains("pose") && !fj.at("pose").is_null())
        frame.pose = pose_from_json(fj.at("pose"));
      seq.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw ValidationError("bad manifest " + manifest_path.string() + ": " +
                          e.what());
  }
  validate_sequence(seq);
  return seq;
}

void save_sequence(const ScanSequence& seq, const fs::path& dir) {
  validate_sequence(seq);
  std::error_code ec;
  fs::create_directories(dir, ec);
  json frames = json::array();
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%05zu.csv", i);
    write_scan(seq.frames[i].scan, dir / name);
    json fj{{"t", seq.frames[i].scan.timestamp}, {"scan", name}};
    fj["pose"] = seq.frames[i].pose ? pose_to_json(*seq.frames[i].pose)
                                    : json(nullptr);
    frames.push_back(std::move(fj));
  }
  json manifest{{"frame_rate_hz", seq.frame_rate_hz}, {"frames", frames}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

nn::Tensor& ParameterStore::add(const std::string& name, nn::Tensor t) {
  if (items_.count(name))
    throw ValidationError("duplicate parameter name: " + name);
  t.node()->requires_grad = true;
  auto [it, ok] = items_.emplace(name, std::move(t));
  return it->second;
}

nn::Tensor& ParameterStore::get(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

const nn::Tensor& ParameterStore::get(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw ValidationError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& [k, v] : items_) out.push_back(k);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [k, v] : items_) v.zero_grad();
}

namespace {

constexpr char kParamMagic[4] = {'R', 'S', 'P', 'R'};
constexpr uint32_t kParamVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));  // little-endian host assumed
}

template <typename T>
T get_le(const std::string& data, size_t& pos) {
  if (pos + sizeof(T) > data.size())
    throw ValidationError("parameter file truncated");
  T v;
  std::memcpy(&v, data.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_parameters(const ParameterStore& store, const fs::path& path,
                     const json& meta) {
  json tensors = json::object();
  std::string payload;
  uint64_t offset = 0;
  for (const auto& [name, t] : store) {
    tensors[name] = {{"shape", t.shape()}, {"dtype", "f64"}, {"offset", offset}};
    const size_t bytes = t.val().size() * sizeof(double);
    payload.append(reinterpret_cast<const char*>(t.val().data()), bytes);
    offset += bytes;
  }
  const json header{{"tensors", tensors}, {"meta", meta}};
  const std::string header_str = header.dump();

  std::string out;
  out.append(kParamMagic, 4);
  put_le<uint32_t>(out, kParamVersion);
  put_le<uint64_t>(out, header_str.size());
  out += header_str;
  out += payload;
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
  put_le<uint32_t>(out, crc);
  write_file(path, out);
}

ParameterStore load_parameters(const fs::path& path, json* meta_out) {
  const std::string data = read_file(path);
  size_t pos = 0;
  if (data.size() < 4 || std::memcmp(data.data(), kParamMagic, 4) != 0)
    throw ValidationError("not a parameter file (bad magic): " + path.string());
  pos = 4;
  const uint32_t version = get_le<uint32_t>(data, pos);
  if (version != kParamVersion)
    throw ValidationError("unknown parameter file version " +
                          std::to_string(version));
  const uint64_t header_len = get_le<uint64_t>(data, pos);
  if (pos + header_len > data.size())
    throw ValidationError("parameter file truncated");
  json header;
  try {
    header = json::parse(data.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad parameter header: ") + e.what());
  }
  pos += header_len;
  if (data.size() < pos + sizeof(uint32_t))
    throw ValidationError("parameter file truncated");
  const size_t payload_len = data.size() - pos - sizeof(uint32_t);
  const char* payload = data.data() + pos;
  size_t crc_pos = pos + payload_len;
  const uint32_t stored_crc = get_le<uint32_t>(data, crc_pos);
  const uint32_t crc = static_cast<uint32_t>(crc32(
      0L, reinterpret_cast<const Bytef*>(payload), static_cast<uInt>(payload_len)));
  if (crc != stored_crc)
    throw ValidationError("parameter file checksum mismatch: " + path.string());

  ParameterStore store;
  try {
    for (const auto& [name, tj] : header.at("tensors").items()) {
      const auto shape = tj.at("shape").get<std::vector<int>>();
      if (tj.at("dtype").get<std::string>() != "f64")
        throw ValidationError("unsupported dtype for tensor " + name);
      const uint64_t off = tj.at("offset").get<uint64_t>();
      int64_t count = 1;
      for (int d : shape) count *= d;
      const uint64_t bytes = static_cast<uint64_t>(count) * sizeof(double);
      if (off + bytes > payload_len)
        throw ValidationError("parameter file truncated (tensor " + name + ")");
      std::vector<double> values(static_cast<size_t>(count));
      std::memcpy(values.data(), payload + off, bytes);
      store.add(name, nn::Tensor::from_data(shape, std::move(values)));
    }
    if (meta_out != nullptr) *meta_out = header.value("meta", json::object());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad parameter header: ") + e.what());
  }
  return store;
}

}  // namespace rpr::io

// Copyright 2026 The CBA Authors.
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

#include "cba/dataset_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cba/binary.hpp"
#include "cba/core.hpp"

namespace cba::io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path);
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

nlohmann::json to_json(const synth::GenConfig& c) {
  return {{"n_ids", c.n_ids},
          {"tracklets_per_id", c.tracklets_per_id},
          {"seq_len", c.seq_len},
          {"channels", c.channels},
          {"height", c.height},
          {"width", c.width},
          {"style_gap", c.style_gap},
          {"style_jitter", c.style_jitter},
          {"granularity_skew", c.granularity_skew},
          {"merge_residual", c.merge_residual},
          {"noise_sigma", c.noise_sigma},
          {"motion_strength", c.motion_strength},
          {"seed", c.seed}};
}

synth::GenConfig gen_config_from_json(const nlohmann::json& j) {
  synth::GenConfig c;
  c.n_ids = j.at("n_ids").get<int>();
  c.tracklets_per_id = j.at("tracklets_per_id").get<int>();
  c.seq_len = j.at("seq_len").get<int>();
  c.channels = j.at("channels").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  c.style_gap = j.at("style_gap").get<double>();
  c.style_jitter = j.value("style_jitter", c.style_jitter);
  c.granularity_skew = j.at("granularity_skew").get<double>();
  c.merge_residual = j.value("merge_residual", c.merge_residual);
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.motion_strength = j.at("motion_strength").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

void write_dataset(const std::string& path,
                   const std::vector<Tracklet>& tracklets,
                   const nlohmann::json& metadata) {
  if (tracklets.empty()) {
    throw Error(ErrorCode::kShapeError, "refusing to write empty dataset");
  }
  const size_t seq_len = tracklets.front().seq_len;
  const FrameShape shape = tracklets.front().shape;
  for (const auto& tr : tracklets) {
    if (tr.seq_len != seq_len || !(tr.shape == shape) ||
        tr.data.size() != seq_len * shape.size()) {
      throw Error(ErrorCode::kShapeError,
                  "all tracklets in a dataset must share dimensions");
    }
  }

  ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 4));
  w.u32(kDatasetVersion);
  w.u32(static_cast<uint32_t>(tracklets.size()));
  w.u32(static_cast<uint32_t>(seq_len));
  w.u32(static_cast<uint32_t>(shape.channels));
  w.u32(static_cast<uint32_t>(shape.height));
  w.u32(static_cast<uint32_t>(shape.width));
  for (const auto& tr : tracklets) {
    for (double v : tr.data) w.f32(static_cast<float>(v));
  }
  uint64_t offset = 0;
  for (const auto& tr : tracklets) {
    w.i32(tr.true_id);
    w.u8(static_cast<uint8_t>(tr.modality));
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.i32(tr.motion_tag);
    w.i32(tr.appearance_id);
    w.u64(offset);
    offset += tr.data.size();
  }
  write_file(path, w.data());

  nlohmann::json side = metadata;
  side["format"] = "XMA1";
  side["version"] = kDatasetVersion;
  side["n_tracklets"] = tracklets.size();
  side["seq_len"] = seq_len;
  side["frame_shape"] = {shape.channels, shape.height, shape.width};
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

Dataset read_dataset(const std::string& path) {
  const std::string raw = read_file(path);
  ByteReader r(raw);
  if (r.bytes(4) != std::string_view(kDatasetMagic, 4)) {
    throw Error(ErrorCode::kCorruptFile, path + ": bad magic");
  }
  if (r.u32() != kDatasetVersion) {
    throw Error(ErrorCode::kCorruptFile, path + ": unsupported version");
  }
  const uint32_t n = r.u32();
  const uint32_t seq_len = r.u32();
  const FrameShape shape{r.u32(), r.u32(), r.u32()};
  const uint64_t per = static_cast<uint64_t>(seq_len) * shape.size();
  if (n == 0 || per == 0) {
    throw Error(ErrorCode::kCorruptFile, path + ": empty dimensions");
  }
  const uint64_t total = per * n;
  const size_t data_start = r.position();
  const uint64_t index_bytes = static_cast<uint64_t>(n) * 24;
  if (r.remaining() != total * 4 + index_bytes) {
    throw Error(ErrorCode::kCorruptFile, path + ": size mismatch");
  }

  Dataset ds;
  ds.tracklets.resize(n);
  r.seek(data_start + total * 4);
  for (auto& tr : ds.tracklets) {
    tr.seq_len = seq_len;
    tr.shape = shape;
    tr.true_id = r.i32();
    const uint8_t m = r.u8();
    if (m > 1) throw Error(ErrorCode::kCorruptFile, path + ": bad modality");
    tr.modality = static_cast<Modality>(m);
    r.bytes(3);
    tr.motion_tag = r.i32();
    tr.appearance_id = r.i32();
    const uint64_t off = r.u64();
    if (off + per > total) {
      throw Error(ErrorCode::kCorruptFile, path + ": offset out of range");
    }
    ByteReader frames(std::string_view(raw).substr(data_start + off * 4,
                                                   per * 4));
    tr.data.resize(per);
    for (double& v : tr.data) {
      v = static_cast<double>(frames.f32());
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kCorruptFile, path + ": non-finite frame value");
      }
    }
  }

  const std::string side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    try {
      ds.metadata = nlohmann::json::parse(read_file(side));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptFile, side + ": " + e.what());
    }
  }
  return ds;
}

}  // namespace cba::io

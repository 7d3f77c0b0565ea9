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

#ifndef CBA_DATASET_IO_HPP_
#define CBA_DATASET_IO_HPP_

#include <string>
#include <vector>

#include "json.hpp"

#include "cba/synthgen.hpp"
#include "cba/tracklet.hpp"

namespace cba::io {

// XMA1 tracklet container, all integers little-endian:
//
//   char[4]  magic "XMA1"
//   u32      version (1)
//   u32      n_tracklets, seq_len, channels, height, width
//   f32      frame data, n_tracklets * seq_len * channels * height * width,
//            laid out [tracklet][t][c][h][w]
//   index    n_tracklets records of
//              i32 true_id, u8 modality, u8[3] zero, i32 motion_tag,
//              i32 appearance_id, u64 offset (in floats, into frame data)
//
// A JSON sidecar at `<path>.json` carries the generator metadata.
inline constexpr char kDatasetMagic[4] = {'X', 'M', 'A', '1'};
inline constexpr uint32_t kDatasetVersion = 1;

struct Dataset {
  std::vector<Tracklet> tracklets;
  nlohmann::json metadata;
};

nlohmann::json to_json(const synth::GenConfig& config);
synth::GenConfig gen_config_from_json(const nlohmann::json& j);

void write_dataset(const std::string& path,
                   const std::vector<Tracklet>& tracklets,
                   const nlohmann::json& metadata);

// Throws kIoError when the file cannot be opened and kCorruptFile when its
// contents do not parse.
Dataset read_dataset(const std::string& path);

std::string sidecar_path(const std::string& path);

}  // namespace cba::io

#endif  // CBA_DATASET_IO_HPP_

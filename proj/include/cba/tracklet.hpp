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

#ifndef CBA_TRACKLET_HPP_
#define CBA_TRACKLET_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cba {

enum class Modality : uint8_t { kVisible = 0, kInfrared = 1 };

inline Modality opposite(Modality m) {
  return m == Modality::kVisible ? Modality::kInfrared : Modality::kVisible;
}
inline const char* to_string(Modality m) {
  return m == Modality::kVisible ? "VIS" : "IR";
}

struct FrameShape {
  size_t channels = 0;
  size_t height = 0;
  size_t width = 0;

  size_t plane() const { return height * width; }
  size_t size() const { return channels * height * width; }
  bool operator==(const FrameShape&) const = default;
};

// A fixed-length sequence of C x H x W frames stored contiguously as
// [t][c][h][w]. `true_id` and `appearance_id` are generator ground truth and
// must never reach the learner.
struct Tracklet {
  size_t seq_len = 0;
  FrameShape shape;
  std::vector<double> data;
  Modality modality = Modality::kVisible;
  int true_id = -1;
  int motion_tag = 0;
  // Id of the appearance template actually rendered. Differs from true_id
  // only for infrared tracklets whose identity was merged with another.
  int appearance_id = -1;

  size_t frame_size() const { return shape.size(); }
  std::span<const double> frame(size_t t) const {
    return {data.data() + t * frame_size(), frame_size()};
  }
  std::span<double> frame(size_t t) {
    return {data.data() + t * frame_size(), frame_size()};
  }
};

}  // namespace cba

#endif  // CBA_TRACKLET_HPP_

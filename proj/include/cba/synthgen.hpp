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

#ifndef CBA_SYNTHGEN_HPP_
#define CBA_SYNTHGEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cba/rng.hpp"
#include "cba/tracklet.hpp"

namespace cba::synth {

// Knobs of the synthetic visible/infrared tracklet generator.
//
// A frame is rendered as
//   sigma_{m,c} * (template_id + motion_strength * shift(P_tag, dir * t))
//     + mu_{m,c} + j_c + noise_sigma * N(0, 1)
// where (mu, sigma) is the per-modality channel style, j ~ N(0, style_jitter)
// a per-tracklet channel offset (camera and illumination drift), P_tag a smooth pattern
// selected by the tracklet's camera-motion tag and shifted horizontally by
// one pixel per frame. Motion tags are drawn with a strong modality bias, so
// the motion pattern is a spurious modality shortcut.
struct GenConfig {
  int n_ids = 24;
  int tracklets_per_id = 4;  // per identity per modality
  int seq_len = 6;
  int channels = 3;
  int height = 16;
  int width = 8;
  // Per-channel mean offset between the two modalities.
  double style_gap = 3.0;
  double style_jitter = 0.0;
  // Fraction of identity pairs (2k, 2k+1) rendered with one shared infrared
  // appearance template.
  double granularity_skew = 0.5;
  // Weight of 2k+1's own template in its merged infrared appearance; 0 makes
  // the pair indistinguishable in infrared.
  double merge_residual = 0.05;
  double noise_sigma = 0.3;
  double motion_strength = 2.0;
  uint64_t seed = 0;

  void validate() const;  // throws Error(kConfigError)
};

inline constexpr int kMotionTags = 2;
// Probability that a tracklet draws a motion tag from its own modality's
// preferred half of the tag set.
inline constexpr double kMotionModalityBias = 0.9;

std::vector<Tracklet> generate(const GenConfig& config);

// Number of distinct infrared appearance templates `generate` would use.
int count_infrared_templates(const GenConfig& config);

enum class Direction { kI2V, kV2I };
inline const char* to_string(Direction d) {
  return d == Direction::kI2V ? "I2V" : "V2I";
}

struct DataSplit {
  std::vector<Tracklet> train;
  std::vector<Tracklet> test_visible;
  std::vector<Tracklet> test_infrared;
  std::vector<int> train_ids;
  std::vector<int> test_ids;

  // I2V queries are infrared tracklets searched against a visible gallery;
  // V2I is the reverse.
  const std::vector<Tracklet>& queries(Direction d) const {
    return d == Direction::kI2V ? test_infrared : test_visible;
  }
  const std::vector<Tracklet>& gallery(Direction d) const {
    return d == Direction::kI2V ? test_visible : test_infrared;
  }
};

// Identity-disjoint split. Identities that share an infrared appearance
// template always land on the same side, and groups are stratified by size
// so merged pairs are split in the same proportion as singletons.
// Throws kSplitTooSmall when either side would be empty.
DataSplit split(const std::vector<Tracklet>& tracklets, double train_fraction,
                Rng& rng);

}  // namespace cba::synth

#endif  // CBA_SYNTHGEN_HPP_

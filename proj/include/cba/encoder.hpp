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

#ifndef CBA_ENCODER_HPP_
#define CBA_ENCODER_HPP_

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cba/core.hpp"
#include "cba/rng.hpp"
#include "cba/tracklet.hpp"

namespace cba {

// Affine frame projection z = W x + b shared by all frames of a tracklet.
// `weight` is row-major, dim x input_dim.
struct EncoderParams {
  size_t dim = 0;
  size_t input_dim = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  static EncoderParams zeros(size_t dim, size_t input_dim);
  // Gaussian weights with variance 1 / input_dim, zero bias.
  static EncoderParams random(size_t dim, size_t input_dim, Rng& rng);

  size_t size() const { return weight.size() + bias.size(); }
  bool operator==(const EncoderParams&) const = default;
};

// Same layout as EncoderParams; holds dL/dW and dL/db.
using EncoderGrads = EncoderParams;

struct SeqFeature {
  // normalize(mean_t(W x_t + b))
  Vec f;
  // normalize(W x_t + b) for each frame
  std::vector<Vec> frame_feats;
  // Norms before normalization, kept for the backward pass.
  double pooled_norm = 0.0;
  std::vector<double> frame_norms;
};

// Upstream gradient w.r.t. the normalized outputs of `encode`. `frames` may
// be empty when no loss touches the frame features.
struct FeatureGrad {
  Vec f;
  std::vector<Vec> frames;
};

// Throws kShapeError on a dimension mismatch and kDegenerateVector when a
// pre-normalization vector is zero.
SeqFeature encode(const EncoderParams& params, const Tracklet& tracklet);

// Pooled feature only; skips the per-frame normalization.
Vec encode_pooled(const EncoderParams& params, const Tracklet& tracklet);

EncoderGrads backprop(const EncoderParams& params, const Tracklet& tracklet,
                      const FeatureGrad& grad);

// Adds the gradient of one tracklet into `accum` given its forward pass.
void accumulate_backprop(const EncoderParams& params, const Tracklet& tracklet,
                         const SeqFeature& forward, const FeatureGrad& grad,
                         EncoderGrads& accum);

// Gradient of a normalized output y = u / |u| pulled back to u.
Vec normalize_backward(std::span<const double> y, double norm,
                       std::span<const double> grad_y);

// Encoder checkpoint: "CBAE" magic, u32 version, u64 header length, a JSON
// header (dims plus caller metadata), then W and b as little-endian f64.
void save_encoder(const std::string& path, const EncoderParams& params,
                  const nlohmann::json& header);
EncoderParams load_encoder(const std::string& path,
                           nlohmann::json* header = nullptr);

std::string serialize_encoder(const EncoderParams& params,
                              const nlohmann::json& header);
// Parses an encoder record at the start of `raw`; `consumed` receives its
// length so callers can store more data after it. `name` prefixes errors.
EncoderParams parse_encoder(std::string_view raw, const std::string& name,
                            nlohmann::json* header = nullptr,
                            size_t* consumed = nullptr);

}  // namespace cba

#endif  // CBA_ENCODER_HPP_

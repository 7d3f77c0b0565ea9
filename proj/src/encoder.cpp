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

#include "cba/encoder.hpp"

#include <cmath>

#include "cba/binary.hpp"

namespace cba {

namespace {

constexpr char kEncoderMagic[4] = {'C', 'B', 'A', 'E'};
constexpr uint32_t kEncoderVersion = 1;

void check_shape(const EncoderParams& params, const Tracklet& tracklet) {
  if (tracklet.frame_size() != params.input_dim || tracklet.seq_len == 0 ||
      tracklet.data.size() != tracklet.seq_len * tracklet.frame_size()) {
    throw Error(ErrorCode::kShapeError,
                "tracklet frame size " + std::to_string(tracklet.frame_size()) +
                    " does not match encoder input " +
                    std::to_string(params.input_dim));
  }
}

// out = W x + b
void project(const EncoderParams& p, std::span<const double> x,
             std::span<double> out) {
  for (size_t r = 0; r < p.dim; ++r) {
    const double* row = p.weight.data() + r * p.input_dim;
    double s = p.bias[r];
    for (size_t k = 0; k < p.input_dim; ++k) s += row[k] * x[k];
    out[r] = s;
  }
}

// grad.weight += g x^T, grad.bias += g
void add_outer(std::span<const double> g, std::span<const double> x,
               EncoderGrads& grad) {
  for (size_t r = 0; r < grad.dim; ++r) {
    if (g[r] == 0.0) continue;
    double* row = grad.weight.data() + r * grad.input_dim;
    for (size_t k = 0; k < grad.input_dim; ++k) row[k] += g[r] * x[k];
    grad.bias[r] += g[r];
  }
}

Vec mean_frame(const Tracklet& tracklet) {
  Vec mean(tracklet.frame_size(), 0.0);
  for (size_t t = 0; t < tracklet.seq_len; ++t) {
    axpy(1.0, tracklet.frame(t), mean);
  }
  for (double& v : mean) v /= static_cast<double>(tracklet.seq_len);
  return mean;
}

}  // namespace

EncoderParams EncoderParams::zeros(size_t dim, size_t input_dim) {
  EncoderParams p;
  p.dim = dim;
  p.input_dim = input_dim;
  p.weight.assign(dim * input_dim, 0.0);
  p.bias.assign(dim, 0.0);
  return p;
}

EncoderParams EncoderParams::random(size_t dim, size_t input_dim, Rng& rng) {
  if (dim < 2 || input_dim == 0) {
    throw Error(ErrorCode::kShapeError, "encoder needs dim >= 2");
  }
  EncoderParams p = zeros(dim, input_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.weight) w = scale * rng.normal();
  return p;
}

SeqFeature encode(const EncoderParams& params, const Tracklet& tracklet) {
  check_shape(params, tracklet);
  SeqFeature out;
  Vec pooled(params.dim, 0.0);
  Vec z(params.dim);
  out.frame_feats.reserve(tracklet.seq_len);
  out.frame_norms.reserve(tracklet.seq_len);
  for (size_t t = 0; t < tracklet.seq_len; ++t) {
    project(params, tracklet.frame(t), z);
    axpy(1.0, z, pooled);
    const double n = l2_norm(z);
    out.frame_norms.push_back(n);
    out.frame_feats.push_back(normalized(z));
  }
  for (double& v : pooled) v /= static_cast<double>(tracklet.seq_len);
  out.pooled_norm = l2_norm(pooled);
  out.f = normalized(pooled);
  return out;
}

Vec encode_pooled(const EncoderParams& params, const Tracklet& tracklet) {
  check_shape(params, tracklet);
  // The affine map commutes with the temporal mean.
  const Vec mean = mean_frame(tracklet);
  Vec z(params.dim);
  project(params, mean, z);
  return normalized(z);
}

Vec normalize_backward(std::span<const double> y, double norm,
                       std::span<const double> grad_y) {
  const double proj = dot(y, grad_y);
  Vec out(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    out[i] = (grad_y[i] - proj * y[i]) / norm;
  }
  return out;
}

void accumulate_backprop(const EncoderParams& params, const Tracklet& tracklet,
                         const SeqFeature& forward, const FeatureGrad& grad,
                         EncoderGrads& accum) {
  check_shape(params, tracklet);
  if (grad.f.size() != params.dim) {
    throw Error(ErrorCode::kShapeError, "feature gradient has wrong size");
  }
  if (!grad.frames.empty() && grad.frames.size() != tracklet.seq_len) {
    throw Error(ErrorCode::kShapeError, "frame gradient count mismatch");
  }
  const Vec g_pooled = normalize_backward(forward.f, forward.pooled_norm,
                                          grad.f);
  if (l2_norm(g_pooled) > 0.0) add_outer(g_pooled, mean_frame(tracklet), accum);
  for (size_t t = 0; t < grad.frames.size(); ++t) {
    if (grad.frames[t].empty()) continue;
    const Vec g = normalize_backward(forward.frame_feats[t],
                                     forward.frame_norms[t], grad.frames[t]);
    add_outer(g, tracklet.frame(t), accum);
  }
}

EncoderGrads backprop(const EncoderParams& params, const Tracklet& tracklet,
                      const FeatureGrad& grad) {
  EncoderGrads out = EncoderParams::zeros(params.dim, params.input_dim);
  accumulate_backprop(params, tracklet, encode(params, tracklet), grad, out);
  return out;
}

std::string serialize_encoder(const EncoderParams& params,
                              const nlohmann::json& header) {
  nlohmann::json h = header;
  h["dim"] = params.dim;
  h["input_dim"] = params.input_dim;
  const std::string text = h.dump();
  io::ByteWriter w;
  w.bytes(std::string_view(kEncoderMagic, 4));
  w.u32(kEncoderVersion);
  w.u64(text.size());
  w.bytes(text);
  for (double v : params.weight) w.f64(v);
  for (double v : params.bias) w.f64(v);
  return w.data();
}

void save_encoder(const std::string& path, const EncoderParams& params,
                  const nlohmann::json& header) {
  io::write_file(path, serialize_encoder(params, header));
}

EncoderParams parse_encoder(std::string_view raw, const std::string& name,
                            nlohmann::json* header, size_t* consumed) {
  io::ByteReader r(raw);
  if (r.remaining() < 4 || r.bytes(4) != std::string_view(kEncoderMagic, 4)) {
    throw Error(ErrorCode::kCorruptFile, name + ": bad magic");
  }
  if (r.u32() != kEncoderVersion) {
    throw Error(ErrorCode::kCorruptFile, name + ": unsupported version");
  }
  const uint64_t len = r.u64();
  if (len > r.remaining()) {
    throw Error(ErrorCode::kCorruptFile, name + ": header overruns file");
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, name + ": " + e.what());
  }
  if (!h.contains("dim") || !h.contains("input_dim") ||
      !h["dim"].is_number_unsigned() || !h["input_dim"].is_number_unsigned()) {
    throw Error(ErrorCode::kCorruptFile, name + ": header lacks dims");
  }
  const size_t dim = h["dim"].get<size_t>();
  const size_t input_dim = h["input_dim"].get<size_t>();
  constexpr size_t kMaxDim = size_t{1} << 20;
  if (dim < 2 || input_dim == 0 || dim > kMaxDim || input_dim > kMaxDim ||
      r.remaining() / 8 < dim * input_dim + dim) {
    throw Error(ErrorCode::kCorruptFile, name + ": truncated parameters");
  }
  EncoderParams p = EncoderParams::zeros(dim, input_dim);
  for (double& v : p.weight) v = r.f64();
  for (double& v : p.bias) v = r.f64();
  if (!all_finite(p.weight) || !all_finite(p.bias)) {
    throw Error(ErrorCode::kCorruptFile, name + ": non-finite parameters");
  }
  if (header) *header = std::move(h);
  if (consumed) *consumed = r.position();
  return p;
}

EncoderParams load_encoder(const std::string& path, nlohmann::json* header) {
  return parse_encoder(io::read_file(path), path, header, nullptr);
}

}  // namespace cba

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

#include "cba/ciw.hpp"

#include <algorithm>
#include <cmath>

namespace cba::ciw {

void InterventionConfig::validate(size_t seq_len) const {
  if (!(mpb_frame_fraction > 0.0 && mpb_frame_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfigError,
                "mpb_frame_fraction: must lie in (0, 1]");
  }
  if (seq_len > 0 && swaps_for(seq_len) > static_cast<int>(seq_len) - 1) {
    throw Error(ErrorCode::kConfigError,
                "ttb_swap_count: must not exceed seq_len - 1");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::kBadTemperature, "tau must be positive");
  }
}

ChannelStats channel_stats(std::span<const double> frame,
                           const FrameShape& shape) {
  ChannelStats s;
  const size_t plane = shape.plane();
  for (size_t c = 0; c < shape.channels; ++c) {
    const auto ch = frame.subspan(c * plane, plane);
    double mean = 0.0;
    for (double v : ch) mean += v;
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (double v : ch) var += (v - mean) * (v - mean);
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(var / static_cast<double>(plane)));
  }
  return s;
}

StyleTransfer mpb_transfer(std::span<const double> target,
                           std::span<const double> reference,
                           const FrameShape& shape) {
  if (target.size() != shape.size() || reference.size() != shape.size()) {
    throw Error(ErrorCode::kShapeError, "mpb_transfer: frame size mismatch");
  }
  const ChannelStats ts = channel_stats(target, shape);
  const ChannelStats rs = channel_stats(reference, shape);
  StyleTransfer out;
  out.frame.assign(target.begin(), target.end());
  const size_t plane = shape.plane();
  for (size_t c = 0; c < shape.channels; ++c) {
    if (!(ts.stddev[c] > 0.0)) {
      ++out.degenerate_channels;
      continue;
    }
    const double scale = rs.stddev[c] / ts.stddev[c];
    for (size_t i = c * plane; i < (c + 1) * plane; ++i) {
      out.frame[i] = scale * (target[i] - ts.mean[c]) + rs.mean[c];
    }
  }
  return out;
}

CounterfactualPair make_mpb_view(const Tracklet& tracklet,
                                 std::span<const Tracklet* const> pool,
                                 const InterventionConfig& config, Rng& rng) {
  if (pool.empty()) {
    throw Error(ErrorCode::kNoReference, "MPB needs a reference pool");
  }
  config.validate(tracklet.seq_len);
  const size_t T = tracklet.seq_len;
  const auto n_sub = static_cast<size_t>(
      std::ceil(config.mpb_frame_fraction * static_cast<double>(T) - 1e-9));

  CounterfactualPair pair;
  pair.kind = ViewKind::kMpb;
  pair.original = tracklet;
  pair.intervened = tracklet;
  pair.perturbed = rng.sample_without_replacement(T, std::max<size_t>(n_sub, 1));
  std::sort(pair.perturbed.begin(), pair.perturbed.end());
  for (size_t t : pair.perturbed) {
    const Tracklet& ref = *pool[rng.uniform_index(pool.size())];
    const size_t r = rng.uniform_index(ref.seq_len);
    StyleTransfer st = mpb_transfer(tracklet.frame(t), ref.frame(r),
                                    tracklet.shape);
    pair.degenerate_channels += st.degenerate_channels;
    std::copy(st.frame.begin(), st.frame.end(),
              pair.intervened.frame(t).begin());
  }
  return pair;
}

CounterfactualPair make_ttb_view(const Tracklet& tracklet,
                                 const InterventionConfig& config, Rng& rng) {
  config.validate(tracklet.seq_len);
  const size_t T = tracklet.seq_len;
  CounterfactualPair pair;
  pair.kind = ViewKind::kTtb;
  pair.original = tracklet;
  pair.intervened = tracklet;
  pair.permutation.resize(T);
  for (size_t t = 0; t < T; ++t) pair.permutation[t] = t;
  if (T >= 2) {
    for (int s = 0; s < config.swaps_for(T); ++s) {
      const size_t t = rng.uniform_index(T - 1);
      std::swap(pair.permutation[t], pair.permutation[t + 1]);
    }
  }
  for (size_t t = 0; t < T; ++t) {
    const auto src = tracklet.frame(pair.permutation[t]);
    std::copy(src.begin(), src.end(), pair.intervened.frame(t).begin());
  }
  return pair;
}

NceResult bidirectional_nce(std::span<const Vec> originals,
                            std::span<const Vec> counterfactuals, double tau) {
  const size_t B = originals.size();
  if (B < 2 || counterfactuals.size() != B) {
    throw Error(ErrorCode::kBatchTooSmall,
                "bidirectional_nce needs B >= 2 paired features");
  }
  if (!(tau > 0.0)) throw Error(ErrorCode::kBadTemperature, "tau <= 0");
  const size_t d = originals[0].size();

  // logits[i][j] = o_i . c_j / tau
  std::vector<Vec> logits(B, Vec(B));
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = 0; j < B; ++j) {
      logits[i][j] = dot(originals[i], counterfactuals[j]) / tau;
    }
  }
  // coef[i][j] = dL/dlogits[i][j]
  std::vector<Vec> coef(B, Vec(B, 0.0));
  NceResult out;
  const double inv = 1.0 / static_cast<double>(B);
  Vec row(B);
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = 0; j < B; ++j) row[j] = logits[i][j];
    out.loss_o2c -= inv * (row[i] - log_sum_exp(row));
    const Vec p = softmax(row, 1.0);
    for (size_t j = 0; j < B; ++j) {
      coef[i][j] += 0.5 * inv * (p[j] - (i == j ? 1.0 : 0.0));
    }
  }
  for (size_t i = 0; i < B; ++i) {
    // Row i of the transposed problem: c_i . o_j / tau = logits[j][i].
    for (size_t j = 0; j < B; ++j) row[j] = logits[j][i];
    out.loss_c2o -= inv * (row[i] - log_sum_exp(row));
    const Vec q = softmax(row, 1.0);
    for (size_t j = 0; j < B; ++j) {
      coef[j][i] += 0.5 * inv * (q[j] - (i == j ? 1.0 : 0.0));
    }
  }
  out.loss = 0.5 * (out.loss_o2c + out.loss_c2o);

  out.grad_originals.assign(B, Vec(d, 0.0));
  out.grad_counterfactuals.assign(B, Vec(d, 0.0));
  for (size_t i = 0; i < B; ++i) {
    for (size_t j = 0; j < B; ++j) {
      const double g = coef[i][j] / tau;
      if (g == 0.0) continue;
      axpy(g, counterfactuals[j], out.grad_originals[i]);
      axpy(g, originals[i], out.grad_counterfactuals[j]);
    }
  }
  return out;
}

namespace {

// Distance-weighted mean over a set and the derivative of that mean w.r.t.
// each distance. sign = +1 weights by exp(d), -1 by exp(-d).
struct WeightedMean {
  double value = 0.0;
  double weight_sum = 0.0;
  Vec weights;
  Vec d_value;  // d value / d d_k
};

WeightedMean weighted_mean(std::span<const double> dists, double sign) {
  Vec scaled(dists.size());
  for (size_t k = 0; k < dists.size(); ++k) scaled[k] = sign * dists[k];
  WeightedMean wm;
  wm.weights = softmax(scaled, 1.0);
  for (size_t k = 0; k < dists.size(); ++k) {
    wm.value += wm.weights[k] * dists[k];
    wm.weight_sum += wm.weights[k];
  }
  wm.d_value.resize(dists.size());
  for (size_t k = 0; k < dists.size(); ++k) {
    wm.d_value[k] = wm.weights[k] * (1.0 + sign * (dists[k] - wm.value));
  }
  return wm;
}

double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

WrtResult ics_wrt_loss(std::span<const Vec> pool,
                       std::span<const TripletGroup> groups) {
  if (groups.empty()) {
    throw Error(ErrorCode::kDegenerateTriplet, "no anchors");
  }
  WrtResult out;
  const size_t d = pool.empty() ? 0 : pool[0].size();
  out.grads.assign(pool.size(), Vec(d, 0.0));
  const double inv = 1.0 / static_cast<double>(groups.size());

  for (const auto& g : groups) {
    if (g.positives.empty() || g.negatives.empty()) {
      throw Error(ErrorCode::kDegenerateTriplet,
                  "anchor needs at least one positive and one negative");
    }
    auto at = [&](size_t i) -> const Vec& {
      if (i >= pool.size()) {
        throw Error(ErrorCode::kShapeError, "triplet index out of range");
      }
      return pool[i];
    };
    const Vec& a = at(g.anchor);
    auto distances = [&](const std::vector<size_t>& idx) {
      Vec dist(idx.size());
      for (size_t k = 0; k < idx.size(); ++k) {
        const Vec& x = at(idx[k]);
        double s = 0.0;
        for (size_t e = 0; e < d; ++e) s += (a[e] - x[e]) * (a[e] - x[e]);
        dist[k] = std::sqrt(s);
      }
      return dist;
    };
    const Vec dp = distances(g.positives);
    const Vec dn = distances(g.negatives);
    const WeightedMean pos = weighted_mean(dp, +1.0);
    const WeightedMean neg = weighted_mean(dn, -1.0);
    const double z = pos.value - neg.value;
    out.loss += inv * softplus(z);
    out.positive_weight_sums.push_back(pos.weight_sum);
    out.negative_weight_sums.push_back(neg.weight_sum);

    const double dz = inv * sigmoid(z);
    auto scatter = [&](const std::vector<size_t>& idx, const Vec& dist,
                       const Vec& d_value, double sign) {
      for (size_t k = 0; k < idx.size(); ++k) {
        if (!(dist[k] > 1e-12)) continue;  // gradient of |a - x| at a == x
        const double c = sign * dz * d_value[k] / dist[k];
        const Vec& x = pool[idx[k]];
        Vec& ga = out.grads[g.anchor];
        Vec& gx = out.grads[idx[k]];
        for (size_t e = 0; e < d; ++e) {
          const double diff = c * (a[e] - x[e]);
          ga[e] += diff;
          gx[e] -= diff;
        }
      }
    };
    scatter(g.positives, dp, pos.d_value, +1.0);
    scatter(g.negatives, dn, neg.d_value, -1.0);
  }
  return out;
}

std::vector<TripletGroup> build_ics_groups(size_t n_tracklets, size_t seq_len,
                                           Rng& rng) {
  std::vector<TripletGroup> groups(n_tracklets);
  for (size_t i = 0; i < n_tracklets; ++i) {
    auto& g = groups[i];
    const size_t a = rng.uniform_index(seq_len);
    g.anchor = i * seq_len + a;
    for (size_t t = 0; t < seq_len; ++t) {
      if (t != a) g.positives.push_back(i * seq_len + t);
    }
    for (size_t j = 0; j < n_tracklets; ++j) {
      if (j == i) continue;
      for (size_t t = 0; t < seq_len; ++t) {
        g.negatives.push_back(j * seq_len + t);
      }
    }
  }
  return groups;
}

}  // namespace cba::ciw

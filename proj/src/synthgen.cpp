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

#include "cba/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cba/core.hpp"

namespace cba::synth {

namespace {

enum Stream : uint64_t {
  kTemplates = 1,
  kStyle = 2,
  kMerges = 3,
  kMotion = 4,
  kTracklets = 5,
};

// Log-scale channel contrast between modalities per unit of style_gap.
constexpr double kScaleGap = 0.1;

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw Error(ErrorCode::kConfigError, field + ": " + why);
}

// Zero mean and unit variance within every channel plane.
void standardize_channels(std::vector<double>& frame, const FrameShape& shape) {
  const size_t n = shape.plane();
  for (size_t c = 0; c < shape.channels; ++c) {
    double* plane = frame.data() + c * n;
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += plane[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      plane[i] -= mean;
      var += plane[i] * plane[i];
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd > 0.0) {
      for (size_t i = 0; i < n; ++i) plane[i] /= sd;
    }
  }
}

// Smoothed Gaussian noise, standardized to zero mean and unit variance per
// channel.
std::vector<double> smooth_pattern(const FrameShape& shape, Rng& rng) {
  const size_t h = shape.height;
  const size_t w = shape.width;
  std::vector<double> out(shape.size());
  for (double& v : out) v = rng.normal();
  std::vector<double> tmp(shape.plane());
  for (size_t c = 0; c < shape.channels; ++c) {
    double* plane = out.data() + c * shape.plane();
    for (int pass = 0; pass < 2; ++pass) {
      for (size_t y = 0; y < h; ++y) {
        for (size_t x = 0; x < w; ++x) {
          double s = 0.0;
          int n = 0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy;
              const long xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) ||
                  xx >= static_cast<long>(w)) {
                continue;
              }
              s += plane[yy * w + xx];
              ++n;
            }
          }
          tmp[y * w + x] = s / n;
        }
      }
      std::copy(tmp.begin(), tmp.end(), plane);
    }
  }
  standardize_channels(out, shape);
  return out;
}

struct Style {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// Pairs (2k, 2k+1) selected for an infrared appearance merge.
std::vector<int> merged_pairs(const GenConfig& config) {
  const int n_pairs = config.n_ids / 2;
  const int n_merge = static_cast<int>(
      std::lround(config.granularity_skew * static_cast<double>(n_pairs)));
  Rng rng = Rng(config.seed).derive(kMerges);
  std::vector<int> pairs;
  for (size_t p : rng.sample_without_replacement(n_pairs, n_merge)) {
    pairs.push_back(static_cast<int>(p));
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

std::vector<int> infrared_appearance(const GenConfig& config) {
  std::vector<int> appearance(config.n_ids);
  for (int i = 0; i < config.n_ids; ++i) appearance[i] = i;
  for (int p : merged_pairs(config)) appearance[2 * p + 1] = 2 * p;
  return appearance;
}

}  // namespace

void GenConfig::validate() const {
  require(n_ids >= 1, "n_ids", "must be >= 1");
  require(tracklets_per_id >= 1, "tracklets_per_id", "must be >= 1");
  require(seq_len >= 2, "seq_len", "must be >= 2");
  require(channels >= 1, "channels", "must be >= 1");
  require(height >= 1, "height", "must be >= 1");
  require(width >= 1, "width", "must be >= 1");
  require(style_gap >= 0.0 && std::isfinite(style_gap), "style_gap",
          "must be finite and >= 0");
  require(style_jitter >= 0.0 && std::isfinite(style_jitter), "style_jitter",
          "must be finite and >= 0");
  require(granularity_skew >= 0.0 && granularity_skew <= 1.0,
          "granularity_skew", "must lie in [0, 1]");
  require(merge_residual >= 0.0 && merge_residual <= 1.0, "merge_residual",
          "must lie in [0, 1]");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "noise_sigma",
          "must be finite and >= 0");
  require(motion_strength >= 0.0 && std::isfinite(motion_strength),
          "motion_strength", "must be finite and >= 0");
}

int count_infrared_templates(const GenConfig& config) {
  config.validate();
  const auto appearance = infrared_appearance(config);
  return static_cast<int>(
      std::set<int>(appearance.begin(), appearance.end()).size());
}

std::vector<Tracklet> generate(const GenConfig& config) {
  config.validate();
  const FrameShape shape{static_cast<size_t>(config.channels),
                         static_cast<size_t>(config.height),
                         static_cast<size_t>(config.width)};
  const Rng root(config.seed);

  std::vector<std::vector<double>> templates;
  {
    Rng rng = root.derive(kTemplates);
    for (int id = 0; id < config.n_ids; ++id) {
      templates.push_back(smooth_pattern(shape, rng));
    }
  }
  std::vector<std::vector<double>> motion_patterns;
  {
    Rng rng = root.derive(kMotion);
    for (int tag = 0; tag < kMotionTags; ++tag) {
      motion_patterns.push_back(smooth_pattern(shape, rng));
    }
  }

  Style styles[2];
  {
    Rng rng = root.derive(kStyle);
    for (auto& s : styles) {
      s.mean.resize(shape.channels);
      s.stddev.resize(shape.channels);
    }
    for (size_t c = 0; c < shape.channels; ++c) {
      const double base = rng.uniform(-0.5, 0.5);
      const double mean_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double scale_sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double half_gap = 0.5 * config.style_gap * mean_sign;
      styles[0].mean[c] = base + half_gap;
      styles[1].mean[c] = base - half_gap;
      styles[0].stddev[c] = std::exp(kScaleGap * config.style_gap * scale_sign);
      styles[1].stddev[c] = std::exp(-kScaleGap * config.style_gap * scale_sign);
    }
  }

  const auto ir_appearance = infrared_appearance(config);
  // Infrared rendering of each identity: its dominant template, blended
  // toward its own when it was merged into another.
  std::vector<std::vector<double>> ir_templates;
  for (int id = 0; id < config.n_ids; ++id) {
    if (ir_appearance[id] == id) {
      ir_templates.push_back(templates[id]);
      continue;
    }
    const double r = config.merge_residual;
    std::vector<double> blend(shape.size());
    for (size_t i = 0; i < blend.size(); ++i) {
      blend[i] = (1.0 - r) * templates[ir_appearance[id]][i] + r * templates[id][i];
    }
    standardize_channels(blend, shape);
    ir_templates.push_back(std::move(blend));
  }
  const size_t fsize = shape.size();
  const size_t w = shape.width;

  std::vector<Tracklet> out;
  out.reserve(static_cast<size_t>(config.n_ids) * config.tracklets_per_id * 2);
  uint64_t index = 0;
  for (int id = 0; id < config.n_ids; ++id) {
    for (Modality modality : {Modality::kVisible, Modality::kInfrared}) {
      const Style& style = styles[static_cast<int>(modality)];
      const int appearance =
          modality == Modality::kInfrared ? ir_appearance[id] : id;
      const auto& tmpl =
          modality == Modality::kInfrared ? ir_templates[id] : templates[id];
      for (int k = 0; k < config.tracklets_per_id; ++k, ++index) {
        Rng rng = root.derive(kTracklets).derive(index);
        // Visible prefers the lower half of the tags, infrared the upper.
        const bool own_half = rng.uniform() < kMotionModalityBias;
        const bool low_half = (modality == Modality::kVisible) == own_half;
        const int tag =
            (low_half ? 0 : kMotionTags / 2) +
            static_cast<int>(rng.uniform_index(kMotionTags / 2));
        const long dir = tag < kMotionTags / 2 ? 1 : -1;
        const auto& motion = motion_patterns[tag];
        std::vector<double> jitter(shape.channels, 0.0);
        if (config.style_jitter > 0.0) {
          for (double& v : jitter) v = config.style_jitter * rng.normal();
        }

        Tracklet tr;
        tr.seq_len = static_cast<size_t>(config.seq_len);
        tr.shape = shape;
        tr.modality = modality;
        tr.true_id = id;
        tr.motion_tag = tag;
        tr.appearance_id = appearance;
        tr.data.resize(tr.seq_len * fsize);
        for (size_t t = 0; t < tr.seq_len; ++t) {
          const long shift = dir * static_cast<long>(t);
          auto frame = tr.frame(t);
          for (size_t c = 0; c < shape.channels; ++c) {
            for (size_t y = 0; y < shape.height; ++y) {
              for (size_t x = 0; x < w; ++x) {
                const size_t i = c * shape.plane() + y * w + x;
                const long sx =
                    ((static_cast<long>(x) - shift) % static_cast<long>(w) +
                     static_cast<long>(w)) %
                    static_cast<long>(w);
                const double content =
                    tmpl[i] + config.motion_strength *
                                  motion[c * shape.plane() + y * w + sx];
                double v = style.stddev[c] * content + style.mean[c] + jitter[c];
                if (config.noise_sigma > 0.0) {
                  v += config.noise_sigma * rng.normal();
                }
                // Quantize to float32 so the on-disk format is lossless.
                frame[i] = static_cast<double>(static_cast<float>(v));
              }
            }
          }
        }
        out.push_back(std::move(tr));
      }
    }
  }
  return out;
}

DataSplit split(const std::vector<Tracklet>& tracklets, double train_fraction,
                Rng& rng) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError,
                "train_fraction: must lie strictly between 0 and 1");
  }
  // Group identities by the infrared appearance they render with.
  std::map<int, std::set<int>> groups;
  std::set<int> all_ids;
  for (const auto& tr : tracklets) {
    all_ids.insert(tr.true_id);
    if (tr.modality == Modality::kInfrared) {
      groups[tr.appearance_id].insert(tr.true_id);
    }
  }
  std::set<int> grouped;
  for (const auto& [_, ids] : groups) grouped.insert(ids.begin(), ids.end());
  for (int id : all_ids) {
    if (!grouped.count(id)) groups[-1 - id].insert(id);
  }

  std::map<size_t, std::vector<std::vector<int>>> strata;
  for (const auto& [_, ids] : groups) {
    strata[ids.size()].emplace_back(ids.begin(), ids.end());
  }
  std::set<int> train_ids;
  for (auto& [_, members] : strata) {
    rng.shuffle(members);
    const auto n_train = static_cast<size_t>(
        std::lround(train_fraction * static_cast<double>(members.size())));
    for (size_t g = 0; g < n_train && g < members.size(); ++g) {
      train_ids.insert(members[g].begin(), members[g].end());
    }
  }
  if (train_ids.empty() || train_ids.size() == all_ids.size()) {
    throw Error(ErrorCode::kSplitTooSmall,
                "split leaves an empty train or test side (" +
                    std::to_string(all_ids.size()) + " identities)");
  }

  DataSplit out;
  for (const auto& tr : tracklets) {
    if (train_ids.count(tr.true_id)) {
      out.train.push_back(tr);
    } else if (tr.modality == Modality::kVisible) {
      out.test_visible.push_back(tr);
    } else {
      out.test_infrared.push_back(tr);
    }
  }
  for (int id : all_ids) {
    (train_ids.count(id) ? out.train_ids : out.test_ids).push_back(id);
  }
  return out;
}

}  // namespace cba::synth

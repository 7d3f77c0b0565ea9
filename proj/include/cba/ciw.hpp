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

// Causal intervention warm-up: counterfactual tracklet views and the losses
// that tie them to the originals.

#ifndef CBA_CIW_HPP_
#define CBA_CIW_HPP_

#include <span>
#include <vector>

#include "cba/core.hpp"
#include "cba/rng.hpp"
#include "cba/tracklet.hpp"

namespace cba::ciw {

struct InterventionConfig {
  // |T_sub| / T, in (0, 1].
  double mpb_frame_fraction = 0.5;
  // Adjacent swaps per TTB view; negative means seq_len / 2.
  int ttb_swap_count = -1;
  // Visible frames receive infrared style.
  bool visible_to_infrared = true;
  // Infrared frames receive visible style.
  bool infrared_to_visible = true;
  double tau = 0.05;

  void validate(size_t seq_len) const;
  int swaps_for(size_t seq_len) const {
    return ttb_swap_count < 0 ? static_cast<int>(seq_len / 2) : ttb_swap_count;
  }
  bool perturbs(Modality m) const {
    return m == Modality::kVisible ? visible_to_infrared : infrared_to_visible;
  }
};

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

ChannelStats channel_stats(std::span<const double> frame,
                           const FrameShape& shape);

struct StyleTransfer {
  std::vector<double> frame;
  // Channels with zero target std, copied through unchanged.
  int degenerate_channels = 0;
};

// Per channel: out = sigma(ref) * (x - mu(x)) / sigma(x) + mu(ref).
StyleTransfer mpb_transfer(std::span<const double> target,
                           std::span<const double> reference,
                           const FrameShape& shape);

enum class ViewKind { kMpb, kTtb };

struct CounterfactualPair {
  Tracklet original;
  Tracklet intervened;
  ViewKind kind = ViewKind::kMpb;
  // MPB: perturbed frame indices (sorted). TTB: intervened[t] shows
  // original frame permutation[t].
  std::vector<size_t> perturbed;
  std::vector<size_t> permutation;
  int degenerate_channels = 0;
};

// Style-transfers ceil(fraction * T) uniformly chosen frames, each from a
// uniformly drawn frame of a uniformly drawn pool tracklet. Throws
// kNoReference on an empty pool.
CounterfactualPair make_mpb_view(const Tracklet& tracklet,
                                 std::span<const Tracklet* const> pool,
                                 const InterventionConfig& config, Rng& rng);

// Applies swaps_for(T) swaps of uniformly chosen adjacent pairs (t, t+1).
CounterfactualPair make_ttb_view(const Tracklet& tracklet,
                                 const InterventionConfig& config, Rng& rng);

struct NceResult {
  double loss = 0.0;
  double loss_o2c = 0.0;
  double loss_c2o = 0.0;
  std::vector<Vec> grad_originals;
  std::vector<Vec> grad_counterfactuals;
};

// L = (L_o2c + L_c2o) / 2 over logits o_i . c_j / tau. Throws
// kBatchTooSmall when B < 2.
NceResult bidirectional_nce(std::span<const Vec> originals,
                            std::span<const Vec> counterfactuals, double tau);

// One anchor with its positive and negative sets, as indices into a shared
// pool of frame features.
struct TripletGroup {
  size_t anchor = 0;
  std::vector<size_t> positives;
  std::vector<size_t> negatives;
};

struct WrtResult {
  double loss = 0.0;
  std::vector<Vec> grads;  // one per pool entry
  // Softmax weight sums per group, exposed for invariant checks.
  std::vector<double> positive_weight_sums;
  std::vector<double> negative_weight_sums;
};

// Weighted regularized triplet over Euclidean distances:
//   L = mean_g log(1 + exp(sum_p w_p d_p - sum_n w_n d_n)),
//   w_p = softmax(d_p), w_n = softmax(-d_n),
// differentiated through the weights. Throws kDegenerateTriplet when a
// group has no positives or no negatives.
WrtResult ics_wrt_loss(std::span<const Vec> pool,
                       std::span<const TripletGroup> groups);

// Builds one group per tracklet from per-tracklet frame features laid out
// contiguously (tracklet i owns pool[i*T, (i+1)*T)): a uniformly drawn
// anchor frame, its T-1 sibling frames as positives, and every frame of the
// other tracklets as negatives.
std::vector<TripletGroup> build_ics_groups(size_t n_tracklets, size_t seq_len,
                                           Rng& rng);

}  // namespace cba::ciw

#endif  // CBA_CIW_HPP_

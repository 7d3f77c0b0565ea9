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

// Prototype-guided uncertainty refinement: cross-modality cluster
// association, infrared memory reconstruction under visible guidance, and
// the hard/soft prototype objectives built on the refined banks.

#ifndef CBA_PGUR_HPP_
#define CBA_PGUR_HPP_

#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cba/assignment.hpp"
#include "cba/cluster.hpp"
#include "cba/core.hpp"

namespace cba::pgur {

struct Assignment {
  int round = 1;
  // (vis i, ir j), ascending in j.
  std::vector<std::pair<int, int>> pairs;
  double cost = 0.0;
  // Fewer available visible rows than infrared columns; some infrared
  // clusters stayed unmatched this round.
  bool insufficient_visible = false;
};

// C(i, j) = 1 - cos(m_vis^i, m_ir^j)
CostMatrix prototype_cost(const cluster::PrototypeBank& vis,
                          const cluster::PrototypeBank& ir);

// Minimum-cost matching of every infrared column to a distinct available
// visible row. With fewer available rows than columns every available row
// is matched instead and `insufficient_visible` is set. The cost is summed
// over pairs in ascending column order.
Assignment match_round(const CostMatrix& cost, const std::set<int>& excluded_vis,
                       int round = 1);

struct AmbiguousGroup {
  int ir = -1;
  std::vector<int> vis;
};

struct AssociationReport {
  int k_vis = 0;
  int k_ir = 0;
  std::vector<Assignment> rounds;
  // V_j for every infrared cluster j, ascending.
  std::vector<std::vector<int>> candidates;
  // (j, i) with |V_j| == 1.
  std::vector<std::pair<int, int>> reliable;
  std::vector<AmbiguousGroup> ambiguous;
  std::vector<int> unmatched_vis;
  std::vector<int> unmatched_ir;
};

// Two matching rounds: all visible prototypes, then those left over.
AssociationReport progressive_match(const cluster::PrototypeBank& vis,
                                    const cluster::PrototypeBank& ir);

struct RefinedEntry {
  int vis_cluster = -1;
  int ir_cluster = -1;
  bool reliable = false;
  // Infrared sample indices that define the refined infrared prototype.
  std::vector<size_t> members;
};

struct DroppedPair {
  int ir_cluster = -1;
  int vis_cluster = -1;
};

struct RefinedBanks {
  std::vector<Vec> vis;
  std::vector<Vec> ir;
  std::vector<RefinedEntry> origin;
  // Refined index of each visible cluster, -1 when absent.
  std::vector<int> vis_to_refined;
  // Infrared cluster each visible cluster was matched to, -1 if unmatched.
  std::vector<int> vis_to_ir;
  // Surviving refined indices for each infrared cluster.
  std::vector<std::vector<int>> ir_candidates;
  std::vector<DroppedPair> dropped;

  size_t k() const { return vis.size(); }
};

// Reliable pairs are copied through; each ambiguous infrared cluster is
// split by assigning every member to its most similar candidate visible
// prototype, and the refined infrared prototype is the normalized
// sub-cluster mean. Candidates that attract no member are dropped.
RefinedBanks reconstruct(std::span<const Vec> features_ir,
                         std::span<const int> labels_ir,
                         const cluster::PrototypeBank& bank_vis,
                         const cluster::PrototypeBank& bank_ir,
                         const AssociationReport& report);

struct SoftTargets {
  Vec i2v;  // over the candidate list
  Vec i2i;
};

// Temperature-1 softmax of f against the candidates' refined visible and
// infrared prototypes. Throws kNotAmbiguous for fewer than two candidates.
SoftTargets soft_targets(std::span<const double> f,
                         std::span<const int> candidates,
                         const RefinedBanks& banks);

struct SampleTarget {
  bool reliable = true;
  int index = -1;               // reliable: refined index
  std::vector<int> candidates;  // ambiguous: refined indices
  SoftTargets soft;
};

// Resolves what a sample is trained against, or nothing when its cluster
// has no refined counterpart. Soft targets are computed from `f` here and
// then held fixed, acting as stop-gradient pseudo-targets.
std::optional<SampleTarget> resolve_target(std::span<const double> f,
                                           Modality modality, int label,
                                           const RefinedBanks& banks);

struct PgurConfig {
  double tau = 0.05;
  double lambda_ir = 1.9;   // weight of the infrared ambiguous term
  double lambda_vis = 1.5;  // weight of the visible ambiguous term
  bool use_ambiguous = true;
};

struct PgurResult {
  double loss = 0.0;  // loss_ir + loss_vis
  double loss_ir = 0.0;
  double loss_vis = 0.0;
  std::vector<Vec> grads_ir;
  std::vector<Vec> grads_vis;
  int reliable_samples = 0;
  int ambiguous_samples = 0;
  // Samples whose cluster is absent from the refined banks.
  int skipped = 0;
};

// Per modality, the mean over resolved samples of
//   reliable:  -log p^v_y - log p^i_y
//   ambiguous: lambda * sum_c (-s^v_c log p^v_c - s^i_c log p^i_c)
// with p = softmax over all refined prototypes at temperature tau.
PgurResult pgur_loss_with_targets(
    std::span<const Vec> features_ir,
    std::span<const std::optional<SampleTarget>> targets_ir,
    std::span<const Vec> features_vis,
    std::span<const std::optional<SampleTarget>> targets_vis,
    const RefinedBanks& banks, const PgurConfig& config);

PgurResult pgur_loss(std::span<const Vec> features_ir,
                     std::span<const int> labels_ir,
                     std::span<const Vec> features_vis,
                     std::span<const int> labels_vis,
                     const RefinedBanks& banks, const PgurConfig& config);

// Per-epoch association dump.
nlohmann::json association_summary(const AssociationReport& report,
                                   const RefinedBanks& banks);

}  // namespace cba::pgur

#endif  // CBA_PGUR_HPP_

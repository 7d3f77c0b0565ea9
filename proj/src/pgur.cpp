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

#include "cba/pgur.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cba::pgur {

CostMatrix prototype_cost(const cluster::PrototypeBank& vis,
                          const cluster::PrototypeBank& ir) {
  CostMatrix c(vis.k(), ir.k());
  for (size_t i = 0; i < vis.k(); ++i) {
    for (size_t j = 0; j < ir.k(); ++j) {
      c(i, j) = 1.0 - cosine_sim(vis.prototypes[i], ir.prototypes[j]);
    }
  }
  return c;
}

Assignment match_round(const CostMatrix& cost, const std::set<int>& excluded_vis,
                       int round) {
  for (double v : cost.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNumericalDivergence, "non-finite matching cost");
    }
  }
  std::vector<int> avail;
  for (size_t i = 0; i < cost.rows; ++i) {
    if (!excluded_vis.contains(static_cast<int>(i))) {
      avail.push_back(static_cast<int>(i));
    }
  }
  Assignment out;
  out.round = round;
  const size_t cols = cost.cols;
  if (avail.empty() || cols == 0) {
    out.insufficient_visible = cols > 0;
    return out;
  }

  if (avail.size() >= cols) {
    // Left side: infrared columns; right side: available visible rows.
    CostMatrix t(cols, avail.size());
    for (size_t j = 0; j < cols; ++j) {
      for (size_t r = 0; r < avail.size(); ++r) t(j, r) = cost(avail[r], j);
    }
    const std::vector<int> m = solve_assignment(t);
    for (size_t j = 0; j < cols; ++j) {
      out.pairs.emplace_back(avail[m[j]], static_cast<int>(j));
    }
  } else {
    out.insufficient_visible = true;
    CostMatrix t(avail.size(), cols);
    for (size_t r = 0; r < avail.size(); ++r) {
      for (size_t j = 0; j < cols; ++j) t(r, j) = cost(avail[r], j);
    }
    const std::vector<int> m = solve_assignment(t);
    for (size_t r = 0; r < avail.size(); ++r) {
      out.pairs.emplace_back(avail[r], m[r]);
    }
    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
  }
  for (const auto& [i, j] : out.pairs) out.cost += cost(i, j);
  return out;
}

AssociationReport progressive_match(const cluster::PrototypeBank& vis,
                                    const cluster::PrototypeBank& ir) {
  if (vis.k() == 0 || ir.k() == 0) {
    throw Error(ErrorCode::kNoClusters, "progressive_match needs both banks");
  }
  AssociationReport rep;
  rep.k_vis = static_cast<int>(vis.k());
  rep.k_ir = static_cast<int>(ir.k());
  const CostMatrix cost = prototype_cost(vis, ir);

  std::set<int> used;
  rep.rounds.push_back(match_round(cost, used, 1));
  for (const auto& [i, j] : rep.rounds[0].pairs) used.insert(i);
  if (static_cast<int>(used.size()) < rep.k_vis) {
    rep.rounds.push_back(match_round(cost, used, 2));
    for (const auto& [i, j] : rep.rounds[1].pairs) used.insert(i);
  }

  rep.candidates.assign(rep.k_ir, {});
  for (const auto& round : rep.rounds) {
    for (const auto& [i, j] : round.pairs) rep.candidates[j].push_back(i);
  }
  for (int j = 0; j < rep.k_ir; ++j) {
    auto& v = rep.candidates[j];
    std::sort(v.begin(), v.end());
    if (v.empty()) {
      rep.unmatched_ir.push_back(j);
    } else if (v.size() == 1) {
      rep.reliable.emplace_back(j, v[0]);
    } else {
      rep.ambiguous.push_back({j, v});
    }
  }
  for (int i = 0; i < rep.k_vis; ++i) {
    if (!used.contains(i)) rep.unmatched_vis.push_back(i);
  }
  return rep;
}

RefinedBanks reconstruct(std::span<const Vec> features_ir,
                         std::span<const int> labels_ir,
                         const cluster::PrototypeBank& bank_vis,
                         const cluster::PrototypeBank& bank_ir,
                         const AssociationReport& report) {
  if (features_ir.size() != labels_ir.size()) {
    throw Error(ErrorCode::kLabelMismatch, "features and labels differ");
  }
  if (static_cast<int>(bank_vis.k()) != report.k_vis ||
      static_cast<int>(bank_ir.k()) != report.k_ir) {
    throw Error(ErrorCode::kLabelMismatch, "banks do not match the report");
  }
  std::vector<std::vector<size_t>> members(report.k_ir);
  for (size_t n = 0; n < labels_ir.size(); ++n) {
    const int y = labels_ir[n];
    if (y < 0) continue;
    if (y >= report.k_ir) {
      throw Error(ErrorCode::kLabelMismatch,
                  "infrared label " + std::to_string(y) + " out of range");
    }
    members[y].push_back(n);
  }

  RefinedBanks out;
  out.vis_to_refined.assign(report.k_vis, -1);
  out.vis_to_ir.assign(report.k_vis, -1);
  out.ir_candidates.assign(report.k_ir, {});
  auto add = [&](int i, int j, bool reliable, Vec ir_proto,
                 std::vector<size_t> mem) {
    const int idx = static_cast<int>(out.vis.size());
    out.vis.push_back(bank_vis.prototypes[i]);
    out.ir.push_back(std::move(ir_proto));
    out.origin.push_back({i, j, reliable, std::move(mem)});
    out.vis_to_refined[i] = idx;
    out.ir_candidates[j].push_back(idx);
  };

  for (int j = 0; j < report.k_ir; ++j) {
    const auto& cands = report.candidates[j];
    for (int i : cands) out.vis_to_ir[i] = j;
    if (cands.size() == 1) {
      add(cands[0], j, true, bank_ir.prototypes[j], members[j]);
      continue;
    }
    if (cands.size() < 2) continue;

    std::vector<std::vector<size_t>> sub(cands.size());
    for (size_t n : members[j]) {
      size_t best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < cands.size(); ++c) {
        const double s =
            cosine_sim(features_ir[n], bank_vis.prototypes[cands[c]]);
        if (s > best_sim) {
          best_sim = s;
          best = c;
        }
      }
      sub[best].push_back(n);
    }
    for (size_t c = 0; c < cands.size(); ++c) {
      if (sub[c].empty()) {
        out.dropped.push_back({j, cands[c]});
        continue;
      }
      Vec mean(features_ir[sub[c][0]].size(), 0.0);
      for (size_t n : sub[c]) axpy(1.0, features_ir[n], mean);
      for (double& v : mean) v /= static_cast<double>(sub[c].size());
      add(cands[c], j, false, normalized(mean), std::move(sub[c]));
    }
  }
  return out;
}

SoftTargets soft_targets(std::span<const double> f,
                         std::span<const int> candidates,
                         const RefinedBanks& banks) {
  if (candidates.size() < 2) {
    throw Error(ErrorCode::kNotAmbiguous,
                "soft targets need at least two candidates");
  }
  Vec lv(candidates.size()), li(candidates.size());
  for (size_t c = 0; c < candidates.size(); ++c) {
    const int k = candidates[c];
    if (k < 0 || k >= static_cast<int>(banks.k())) {
      throw Error(ErrorCode::kLabelMismatch, "candidate out of range");
    }
    lv[c] = dot(f, banks.vis[k]);
    li[c] = dot(f, banks.ir[k]);
  }
  return {softmax(lv, 1.0), softmax(li, 1.0)};
}

std::optional<SampleTarget> resolve_target(std::span<const double> f,
                                           Modality modality, int label,
                                           const RefinedBanks& banks) {
  if (label < 0) return std::nullopt;
  const std::vector<int>* cands = nullptr;
  int own = -1;
  if (modality == Modality::kInfrared) {
    if (label >= static_cast<int>(banks.ir_candidates.size())) {
      throw Error(ErrorCode::kLabelMismatch, "infrared label out of range");
    }
    cands = &banks.ir_candidates[label];
    if (cands->empty()) return std::nullopt;
    own = cands->front();
  } else {
    if (label >= static_cast<int>(banks.vis_to_refined.size())) {
      throw Error(ErrorCode::kLabelMismatch, "visible label out of range");
    }
    own = banks.vis_to_refined[label];
    if (own < 0) return std::nullopt;
    cands = &banks.ir_candidates[banks.vis_to_ir[label]];
  }
  SampleTarget t;
  if (cands->size() < 2) {
    t.index = own;
    return t;
  }
  t.reliable = false;
  t.candidates = *cands;
  t.soft = soft_targets(f, t.candidates, banks);
  return t;
}

namespace {

struct SideResult {
  double loss = 0.0;
  std::vector<Vec> grads;
  int reliable = 0;
  int ambiguous = 0;
  int skipped = 0;
};

SideResult side_loss(std::span<const Vec> features,
                     std::span<const std::optional<SampleTarget>> targets,
                     const RefinedBanks& banks, double tau, double lambda,
                     bool use_ambiguous) {
  if (features.size() != targets.size()) {
    throw Error(ErrorCode::kLabelMismatch, "features and targets differ");
  }
  const size_t K = banks.k();
  SideResult out;
  out.grads.resize(features.size());
  int resolved = 0;
  for (size_t n = 0; n < features.size(); ++n) {
    out.grads[n].assign(features[n].size(), 0.0);
    if (targets[n]) {
      ++resolved;
    } else {
      ++out.skipped;
    }
  }
  if (resolved == 0) return out;
  const double inv = 1.0 / resolved;

  Vec lv(K), li(K), tv(K), ti(K);
  for (size_t n = 0; n < features.size(); ++n) {
    if (!targets[n]) continue;
    const SampleTarget& t = *targets[n];
    const Vec& f = features[n];
    std::fill(tv.begin(), tv.end(), 0.0);
    std::fill(ti.begin(), ti.end(), 0.0);
    double w = 1.0;
    if (t.reliable) {
      ++out.reliable;
      tv[t.index] = 1.0;
      ti[t.index] = 1.0;
    } else {
      ++out.ambiguous;
      w = use_ambiguous ? lambda : 0.0;
      for (size_t c = 0; c < t.candidates.size(); ++c) {
        tv[t.candidates[c]] = t.soft.i2v[c];
        ti[t.candidates[c]] = t.soft.i2i[c];
      }
    }
    if (w == 0.0) continue;
    for (size_t k = 0; k < K; ++k) {
      lv[k] = dot(f, banks.vis[k]) / tau;
      li[k] = dot(f, banks.ir[k]) / tau;
    }
    const double lse_v = log_sum_exp(lv);
    const double lse_i = log_sum_exp(li);
    double l = 0.0;
    for (size_t k = 0; k < K; ++k) {
      if (tv[k] != 0.0) l -= tv[k] * (lv[k] - lse_v);
      if (ti[k] != 0.0) l -= ti[k] * (li[k] - lse_i);
    }
    out.loss += inv * w * l;
    for (size_t k = 0; k < K; ++k) {
      const double pv = std::exp(lv[k] - lse_v);
      const double pi = std::exp(li[k] - lse_i);
      axpy(inv * w * (pv - tv[k]) / tau, banks.vis[k], out.grads[n]);
      axpy(inv * w * (pi - ti[k]) / tau, banks.ir[k], out.grads[n]);
    }
  }
  return out;
}

}  // namespace

PgurResult pgur_loss_with_targets(
    std::span<const Vec> features_ir,
    std::span<const std::optional<SampleTarget>> targets_ir,
    std::span<const Vec> features_vis,
    std::span<const std::optional<SampleTarget>> targets_vis,
    const RefinedBanks& banks, const PgurConfig& config) {
  if (!(config.tau > 0.0)) throw Error(ErrorCode::kBadTemperature, "tau <= 0");
  SideResult ir = side_loss(features_ir, targets_ir, banks, config.tau,
                            config.lambda_ir, config.use_ambiguous);
  SideResult vis = side_loss(features_vis, targets_vis, banks, config.tau,
                             config.lambda_vis, config.use_ambiguous);
  PgurResult out;
  out.loss_ir = ir.loss;
  out.loss_vis = vis.loss;
  out.loss = ir.loss + vis.loss;
  out.grads_ir = std::move(ir.grads);
  out.grads_vis = std::move(vis.grads);
  out.reliable_samples = ir.reliable + vis.reliable;
  out.ambiguous_samples = ir.ambiguous + vis.ambiguous;
  out.skipped = ir.skipped + vis.skipped;
  return out;
}

PgurResult pgur_loss(std::span<const Vec> features_ir,
                     std::span<const int> labels_ir,
                     std::span<const Vec> features_vis,
                     std::span<const int> labels_vis,
                     const RefinedBanks& banks, const PgurConfig& config) {
  if (features_ir.size() != labels_ir.size() ||
      features_vis.size() != labels_vis.size()) {
    throw Error(ErrorCode::kLabelMismatch, "features and labels differ");
  }
  int noise = 0;
  std::vector<std::optional<SampleTarget>> t_ir, t_vis;
  for (size_t n = 0; n < features_ir.size(); ++n) {
    noise += labels_ir[n] < 0;
    t_ir.push_back(resolve_target(features_ir[n], Modality::kInfrared,
                                  labels_ir[n], banks));
  }
  for (size_t n = 0; n < features_vis.size(); ++n) {
    noise += labels_vis[n] < 0;
    t_vis.push_back(resolve_target(features_vis[n], Modality::kVisible,
                                   labels_vis[n], banks));
  }
  PgurResult out = pgur_loss_with_targets(features_ir, t_ir, features_vis,
                                          t_vis, banks, config);
  out.skipped -= noise;
  return out;
}

nlohmann::json association_summary(const AssociationReport& report,
                                   const RefinedBanks& banks) {
  nlohmann::json j;
  j["k_vis"] = report.k_vis;
  j["k_ir"] = report.k_ir;
  j["k_refined"] = banks.k();
  j["reliable"] = report.reliable.size();
  j["ambiguous"] = report.ambiguous.size();
  j["unmatched_vis"] = report.unmatched_vis;
  j["unmatched_ir"] = report.unmatched_ir;
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : report.rounds) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [i, jj] : r.pairs) pairs.push_back({i, jj});
    rounds.push_back({{"round", r.round},
                      {"cost", r.cost},
                      {"insufficient_visible", r.insufficient_visible},
                      {"pairs", pairs}});
  }
  j["rounds"] = rounds;
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : banks.dropped) {
    dropped.push_back({{"ir", d.ir_cluster}, {"vis", d.vis_cluster}});
  }
  j["dropped"] = dropped;
  return j;
}

}  // namespace cba::pgur

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

#include "cba/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cba/binary.hpp"

namespace cba::eval {

RetrievalResult evaluate(std::span<const Vec> query_feats,
                         std::span<const Vec> gallery_feats,
                         std::span<const int> query_ids,
                         std::span<const int> gallery_ids,
                         synth::Direction direction) {
  if (query_feats.size() != query_ids.size() ||
      gallery_feats.size() != gallery_ids.size()) {
    throw Error(ErrorCode::kShapeError, "features and ids differ in length");
  }
  const std::set<int> gallery_set(gallery_ids.begin(), gallery_ids.end());
  std::vector<size_t> offenders;
  for (size_t q = 0; q < query_ids.size(); ++q) {
    if (!gallery_set.contains(query_ids[q])) offenders.push_back(q);
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << "queries without a gallery match:";
    for (size_t q : offenders) msg << ' ' << q << "(id " << query_ids[q] << ')';
    throw Error(ErrorCode::kUnmatchableQuery, msg.str());
  }

  RetrievalResult out;
  out.direction = direction;
  const std::vector<int> ks = {1, 5, 10};
  std::vector<int> hits(ks.size(), 0);
  const size_t G = gallery_feats.size();
  std::vector<double> sims(G);
  std::vector<size_t> order(G);
  for (size_t q = 0; q < query_feats.size(); ++q) {
    for (size_t g = 0; g < G; ++g) {
      sims[g] = cosine_sim(query_feats[q], gallery_feats[g]);
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return sims[a] > sims[b]; });
    int found = 0;
    int first = 0;
    double ap = 0.0;
    for (size_t r = 0; r < G; ++r) {
      if (gallery_ids[order[r]] != query_ids[q]) continue;
      ++found;
      if (first == 0) first = static_cast<int>(r) + 1;
      ap += static_cast<double>(found) / static_cast<double>(r + 1);
    }
    ap /= found;
    out.first_hit.push_back(first);
    out.average_precision.push_back(ap);
    for (size_t k = 0; k < ks.size(); ++k) hits[k] += first <= ks[k];
  }
  const double nq = static_cast<double>(query_feats.size());
  for (size_t k = 0; k < ks.size(); ++k) {
    out.rank_k[ks[k]] = nq > 0 ? hits[k] / nq : 0.0;
  }
  out.map_score =
      nq > 0 ? std::accumulate(out.average_precision.begin(),
                               out.average_precision.end(), 0.0) / nq
             : 0.0;
  return out;
}

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

// Maps noise to fresh singleton ids.
std::vector<int> with_singletons(std::span<const int> labels) {
  int next = 0;
  for (int l : labels) next = std::max(next, l + 1);
  std::vector<int> out(labels.begin(), labels.end());
  for (int& l : out) {
    if (l < 0) l = next++;
  }
  return out;
}

}  // namespace

double adjusted_rand_index(std::span<const int> labels,
                           std::span<const int> truth) {
  if (labels.size() != truth.size()) {
    throw Error(ErrorCode::kLabelMismatch, "labels and truth differ");
  }
  const size_t n = labels.size();
  if (n < 2) return 1.0;
  const std::vector<int> a = with_singletons(labels);
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (size_t i = 0; i < n; ++i) {
    table[{a[i], truth[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[truth[i]] += 1.0;
  }
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : table) index += choose2(c);
  for (const auto& [key, c] : rows) sum_a += choose2(c);
  for (const auto& [key, c] : cols) sum_b += choose2(c);
  const double expected = sum_a * sum_b / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

ClusterReport cluster_diagnostics(std::span<const int> labels_vis,
                                  std::span<const int> true_vis,
                                  std::span<const int> labels_ir,
                                  std::span<const int> true_ir) {
  ClusterReport r;
  auto count = [](std::span<const int> labels, int& k, int& noise) {
    std::set<int> seen;
    for (int l : labels) {
      if (l < 0) {
        ++noise;
      } else {
        seen.insert(l);
      }
    }
    k = static_cast<int>(seen.size());
  };
  count(labels_vis, r.k_vis, r.noise_vis);
  count(labels_ir, r.k_ir, r.noise_ir);
  r.ari_vis = adjusted_rand_index(labels_vis, true_vis);
  r.ari_ir = adjusted_rand_index(labels_ir, true_ir);
  r.granularity_ratio =
      r.k_ir > 0 ? static_cast<double>(r.k_vis) / r.k_ir : 0.0;
  return r;
}

nlohmann::json to_json(const RetrievalResult& r) {
  nlohmann::json j;
  j["direction"] = synth::to_string(r.direction);
  for (const auto& [k, v] : r.rank_k) j["rank" + std::to_string(k)] = v;
  j["mAP"] = r.map_score;
  j["n_queries"] = r.first_hit.size();
  return j;
}

nlohmann::json to_json(const ClusterReport& r) {
  return {{"k_vis", r.k_vis},         {"k_ir", r.k_ir},
          {"noise_vis", r.noise_vis}, {"noise_ir", r.noise_ir},
          {"ari_vis", r.ari_vis},     {"ari_ir", r.ari_ir},
          {"granularity_ratio", r.granularity_ratio}};
}

void write_ranks_csv(const std::string& path,
                     std::span<const RetrievalResult> results) {
  std::ostringstream out;
  out.precision(17);
  out << "direction,query,first_hit,average_precision\n";
  for (const auto& r : results) {
    for (size_t q = 0; q < r.first_hit.size(); ++q) {
      out << synth::to_string(r.direction) << ',' << q << ','
          << r.first_hit[q] << ',' << r.average_precision[q] << '\n';
    }
  }
  io::write_file(path, out.str());
}

}  // namespace cba::eval

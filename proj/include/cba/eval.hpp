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

#ifndef CBA_EVAL_HPP_
#define CBA_EVAL_HPP_

#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cba/core.hpp"
#include "cba/synthgen.hpp"

namespace cba::eval {

struct RetrievalResult {
  synth::Direction direction = synth::Direction::kI2V;
  std::map<int, double> rank_k;  // k in {1, 5, 10}
  double map_score = 0.0;
  // 1-based rank of the first correct gallery entry, per query.
  std::vector<int> first_hit;
  std::vector<double> average_precision;
};

// Gallery entries are ranked by descending cosine similarity; equal scores
// keep gallery order. Throws kUnmatchableQuery naming every query whose
// identity has no gallery entry.
RetrievalResult evaluate(std::span<const Vec> query_feats,
                         std::span<const Vec> gallery_feats,
                         std::span<const int> query_ids,
                         std::span<const int> gallery_ids,
                         synth::Direction direction = synth::Direction::kI2V);

// Adjusted Rand index between a predicted labelling and ground truth. Noise
// labels (< 0) are treated as singleton clusters.
double adjusted_rand_index(std::span<const int> labels,
                           std::span<const int> truth);

struct ClusterReport {
  int k_vis = 0;
  int k_ir = 0;
  int noise_vis = 0;
  int noise_ir = 0;
  double ari_vis = 0.0;
  double ari_ir = 0.0;
  double granularity_ratio = 0.0;  // k_vis / k_ir, 0 when k_ir == 0
};

ClusterReport cluster_diagnostics(std::span<const int> labels_vis,
                                  std::span<const int> true_vis,
                                  std::span<const int> labels_ir,
                                  std::span<const int> true_ir);

nlohmann::json to_json(const RetrievalResult& r);
nlohmann::json to_json(const ClusterReport& r);

// Columns: direction,query,first_hit,average_precision
void write_ranks_csv(const std::string& path,
                     std::span<const RetrievalResult> results);

}  // namespace cba::eval

#endif  // CBA_EVAL_HPP_

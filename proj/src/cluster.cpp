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

#include "cba/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "cba/binary.hpp"

namespace cba::cluster {

PseudoLabels dbscan(std::span<const Vec> features, double eps, int min_pts) {
  if (min_pts < 1 || !(eps > 0.0)) {
    throw Error(ErrorCode::kConfigError, "dbscan: need eps > 0, min_pts >= 1");
  }
  const size_t n = features.size();
  std::vector<double> norms(n);
  for (size_t i = 0; i < n; ++i) {
    norms[i] = l2_norm(features[i]);
    if (!(norms[i] > 0.0)) {
      throw Error(ErrorCode::kDegenerateVector, "dbscan: zero feature");
    }
  }

  std::vector<std::vector<size_t>> neighbors(n);
  for (size_t i = 0; i < n; ++i) {
    neighbors[i].push_back(i);
    for (size_t j = i + 1; j < n; ++j) {
      const double cos = std::clamp(
          dot(features[i], features[j]) / (norms[i] * norms[j]), -1.0, 1.0);
      if (1.0 - cos <= eps) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  auto is_core = [&](size_t i) {
    return static_cast<int>(neighbors[i].size()) >= min_pts;
  };

  constexpr int kUnvisited = -2;
  PseudoLabels out;
  out.labels.assign(n, kUnvisited);
  for (size_t i = 0; i < n; ++i) {
    if (out.labels[i] != kUnvisited) continue;
    if (!is_core(i)) {
      out.labels[i] = kNoise;  // may still be claimed as a border point
      continue;
    }
    const int c = out.k++;
    out.labels[i] = c;
    std::deque<size_t> frontier(neighbors[i].begin(), neighbors[i].end());
    while (!frontier.empty()) {
      const size_t q = frontier.front();
      frontier.pop_front();
      if (out.labels[q] == kNoise) out.labels[q] = c;
      if (out.labels[q] != kUnvisited) continue;
      out.labels[q] = c;
      if (is_core(q)) {
        frontier.insert(frontier.end(), neighbors[q].begin(),
                        neighbors[q].end());
      }
    }
  }
  return out;
}

PrototypeBank build_bank(std::span<const Vec> features,
                         std::span<const int> labels, Modality modality,
                         double momentum) {
  if (features.size() != labels.size()) {
    throw Error(ErrorCode::kLabelMismatch, "features and labels differ");
  }
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  if (k == 0) throw Error(ErrorCode::kNoClusters, "all samples are noise");
  const size_t d = features.front().size();
  std::vector<Vec> sums(k, Vec(d, 0.0));
  std::vector<int> counts(k, 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) continue;
    axpy(1.0, features[i], sums[labels[i]]);
    ++counts[labels[i]];
  }
  PrototypeBank bank;
  bank.modality = modality;
  bank.momentum = momentum;
  for (int c = 0; c < k; ++c) {
    if (counts[c] == 0) {
      throw Error(ErrorCode::kLabelMismatch,
                  "cluster " + std::to_string(c) + " has no members");
    }
    for (double& v : sums[c]) v /= counts[c];
    bank.prototypes.push_back(normalized(sums[c]));
  }
  return bank;
}

IntraResult intra_loss(std::span<const Vec> features,
                       std::span<const int> labels, const PrototypeBank& bank,
                       double tau) {
  if (features.size() != labels.size()) {
    throw Error(ErrorCode::kLabelMismatch, "features and labels differ");
  }
  if (!(tau > 0.0)) throw Error(ErrorCode::kBadTemperature, "tau <= 0");
  const size_t K = bank.k();
  IntraResult out;
  out.grads.resize(features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    const int y = labels[i];
    if (y >= static_cast<int>(K)) {
      throw Error(ErrorCode::kLabelMismatch,
                  "label " + std::to_string(y) + " >= bank size " +
                      std::to_string(K));
    }
    out.grads[i].assign(features[i].size(), 0.0);
    if (y < 0) continue;
    ++out.used;
  }
  if (out.used == 0) return out;
  const double inv = 1.0 / out.used;
  Vec logits(K);
  for (size_t i = 0; i < features.size(); ++i) {
    const int y = labels[i];
    if (y < 0) continue;
    for (size_t c = 0; c < K; ++c) {
      logits[c] = dot(features[i], bank.prototypes[c]) / tau;
    }
    out.loss += inv * (log_sum_exp(logits) - logits[y]);
    const Vec p = softmax(logits, 1.0);
    for (size_t c = 0; c < K; ++c) {
      const double g = inv * (p[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) /
                       tau;
      axpy(g, bank.prototypes[c], out.grads[i]);
    }
  }
  return out;
}

void apply_momentum(PrototypeBank& bank, std::span<const Vec> features,
                    std::span<const int> labels) {
  const double m = bank.momentum;
  for (size_t i = 0; i < features.size(); ++i) {
    const int y = labels[i];
    if (y < 0) continue;
    if (y >= static_cast<int>(bank.k())) {
      throw Error(ErrorCode::kLabelMismatch, "momentum update out of range");
    }
    Vec& proto = bank.prototypes[y];
    for (size_t e = 0; e < proto.size(); ++e) {
      proto[e] = m * proto[e] + (1.0 - m) * features[i][e];
    }
    normalize_in_place(proto);
  }
}

void write_labels_csv(const std::string& path, std::span<const int> labels,
                      Modality modality) {
  std::ostringstream out;
  out << "index,modality,label\n";
  for (size_t i = 0; i < labels.size(); ++i) {
    out << i << ',' << to_string(modality) << ',' << labels[i] << '\n';
  }
  io::write_file(path, out.str());
}

void write_prototypes(const std::string& path, const PrototypeBank& bank) {
  io::ByteWriter w;
  w.bytes("CBAP");
  w.u32(static_cast<uint32_t>(bank.k()));
  w.u32(static_cast<uint32_t>(bank.k() ? bank.prototypes[0].size() : 0));
  for (const auto& p : bank.prototypes) {
    for (double v : p) w.f64(v);
  }
  io::write_file(path, w.data());
}

}  // namespace cba::cluster

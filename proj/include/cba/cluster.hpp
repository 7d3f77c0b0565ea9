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

#ifndef CBA_CLUSTER_HPP_
#define CBA_CLUSTER_HPP_

#include <span>
#include <string>
#include <vector>

#include "cba/core.hpp"
#include "cba/tracklet.hpp"

namespace cba::cluster {

inline constexpr int kNoise = -1;

struct PseudoLabels {
  std::vector<int> labels;  // kNoise or 0..k-1
  int k = 0;
};

struct ClusterConfig {
  double eps = 0.35;
  int min_pts = 2;
  double momentum = 0.2;
};

// DBSCAN over cosine distance 1 - cos(a, b). A point is core when at least
// `min_pts` points, itself included, lie within `eps`. Points are visited in
// index order, so cluster ids follow the first core point of each component
// and a border point joins the first cluster that reaches it.
PseudoLabels dbscan(std::span<const Vec> features, double eps, int min_pts);

struct PrototypeBank {
  std::vector<Vec> prototypes;  // unit norm
  Modality modality = Modality::kVisible;
  double momentum = 0.2;

  size_t k() const { return prototypes.size(); }
};

// Normalized per-cluster centroids; noise is ignored. Throws kNoClusters
// when no label is >= 0.
PrototypeBank build_bank(std::span<const Vec> features,
                         std::span<const int> labels, Modality modality,
                         double momentum);

struct IntraResult {
  double loss = 0.0;  // mean over non-noise samples
  std::vector<Vec> grads;
  int used = 0;
};

// Prototype InfoNCE: -log softmax_c(f . m_c / tau) at the sample's label.
// Noise samples contribute nothing. Throws kLabelMismatch for labels >= K.
IntraResult intra_loss(std::span<const Vec> features,
                       std::span<const int> labels, const PrototypeBank& bank,
                       double tau);

// m_c <- normalize(momentum * m_c + (1 - momentum) * f) for each labeled
// sample, in index order.
void apply_momentum(PrototypeBank& bank, std::span<const Vec> features,
                    std::span<const int> labels);

void write_labels_csv(const std::string& path, std::span<const int> labels,
                      Modality modality);
// "CBAP" magic, u32 k, u32 dim, then prototypes as little-endian f64.
void write_prototypes(const std::string& path, const PrototypeBank& bank);

}  // namespace cba::cluster

#endif  // CBA_CLUSTER_HPP_

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

// Three-stage training schedule over a linear tracklet encoder: causal
// intervention warm-up, intra-modality clustering, then cross-modality
// refinement on top of both.

#ifndef CBA_TRAINER_HPP_
#define CBA_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cba/ciw.hpp"
#include "cba/cluster.hpp"
#include "cba/encoder.hpp"
#include "cba/pgur.hpp"
#include "cba/tracklet.hpp"

namespace cba::train {

struct TrainConfig {
  int stage1_epochs = 40;
  int stage2_epochs = 30;
  int stage3_epochs = 50;
  // Peak stage-1 learning rate, cosine-decayed over stage 1.
  double lr = 4e-5;
  // Stages 2 and 3 run at lr * lr_late_factor.
  double lr_late_factor = 0.01;
  int batch_per_modality = 16;
  int dim = 32;
  double tau = 0.05;
  double lambda1 = 2.6;  // TTB
  double lambda2 = 0.1;  // ICS
  double lambda3 = 1.9;  // infrared ambiguous
  double lambda4 = 1.5;  // visible ambiguous
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool stage3_keep_ciw = true;

  // Ablation switches.
  bool use_mpb = true;
  bool use_ttb = true;
  bool use_ics = true;
  bool use_pgur = true;
  bool use_ambiguous = true;

  ciw::InterventionConfig intervention;
  cluster::ClusterConfig clustering;
  uint64_t seed = 0;

  void validate(size_t seq_len) const;  // throws kConfigError
  int total_epochs() const {
    return stage1_epochs + stage2_epochs + stage3_epochs;
  }
  // Stage (1, 2 or 3) that global epoch `epoch` belongs to.
  int stage_of(int epoch) const;
  double lr_at(int epoch) const;
  bool ciw_enabled() const { return use_mpb || use_ttb || use_ics; }
};

// Settings used for desk-scale runs on the synthetic benchmark: the same
// three-stage shape with far fewer optimizer steps and smaller batches, so
// the peak learning rate is raised accordingly.
TrainConfig desk_profile();

nlohmann::json to_json(const TrainConfig& c);

struct Adam {
  std::vector<double> m;
  std::vector<double> v;
  uint64_t step = 0;

  void step_params(EncoderParams& params, const EncoderGrads& grads,
                   double lr, const TrainConfig& config);
};

struct EpochMetrics {
  int epoch = 0;
  int stage = 1;
  double lr = 0.0;
  int steps = 0;
  // Means over the epoch's batches.
  double l_total = 0.0;
  double l_intra = 0.0;
  double l_ciw = 0.0;
  double l_mpb = 0.0;
  double l_ttb = 0.0;
  double l_seq = 0.0;
  double l_pgur = 0.0;
  // Clustering and association; -1 when not computed this epoch.
  int k_vis = -1;
  int k_ir = -1;
  int k_refined = -1;
  int reliable = -1;
  int ambiguous = -1;
  int dropped = -1;
  int pgur_skipped_samples = 0;
  bool pgur_skipped = false;

  nlohmann::json to_json() const;
};

struct TrainState {
  EncoderParams params;
  Adam adam;
  int epoch = 0;  // completed epochs
  int stage = 1;
  std::optional<cluster::PrototypeBank> bank_vis;
  std::optional<cluster::PrototypeBank> bank_ir;
  std::optional<pgur::AssociationReport> report;
  std::optional<pgur::RefinedBanks> refined;
  std::vector<EpochMetrics> history;
};

TrainState init_state(const TrainConfig& config, size_t input_dim);

// One mini-batch per modality (index 0 visible, 1 infrared) and what the
// objective is evaluated against.
struct Batch {
  std::vector<const Tracklet*> tracklets[2];
  std::vector<int> labels[2];  // pseudo-labels, kNoise when unused
};

struct BatchContext {
  bool ciw = false;
  const cluster::PrototypeBank* bank[2] = {nullptr, nullptr};
  const pgur::RefinedBanks* refined = nullptr;
};

struct BatchLoss {
  double total = 0.0;  // intra + ciw + pgur
  double intra = 0.0;
  double ciw = 0.0;  // mpb + lambda1 * ttb + lambda2 * seq
  double mpb = 0.0;
  double ttb = 0.0;
  double seq = 0.0;
  double pgur = 0.0;
  int pgur_skipped = 0;
  EncoderGrads grads;
  std::vector<Vec> features[2];  // pooled features of the batch
};

// Objective of one optimizer step and its gradient w.r.t. the encoder.
// Counterfactual views and triplet anchors are drawn from streams derived
// from `rng`, so a fixed `rng` makes the objective a deterministic function
// of `params`. Refinement soft targets are recomputed from the current
// features but carry no gradient.
BatchLoss batch_loss(const EncoderParams& params, const Batch& batch,
                     const BatchContext& context, const TrainConfig& config,
                     const Rng& rng);

struct Hooks {
  std::function<void(const EpochMetrics&, const TrainState&)> on_epoch;
  // Called once per stage-3 epoch with the association summary.
  std::function<void(int epoch, const nlohmann::json&)> on_association;
  // Pseudo-labels of the train tracklets, per modality, per clustering.
  std::function<void(int epoch, Modality, std::span<const int>)> on_labels;
};

// Each runs epochs until the stage's end boundary; a state already past the
// boundary is left untouched. NaN or infinite losses throw
// kNumericalDivergence with `state` holding the last good parameters.
void run_stage1(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks = {});
void run_stage2(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks = {});
void run_stage3(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks = {});
void run_all(TrainState& state, std::span<const Tracklet> train,
             const TrainConfig& config, const Hooks& hooks = {});

// Encoder record followed by "ADAM", u64 step, u64 n, then m and v as f64.
// The header carries epoch, stage and any caller fields.
void save_checkpoint(const std::string& path, const TrainState& state,
                     const nlohmann::json& header);
TrainState load_checkpoint(const std::string& path,
                           nlohmann::json* header = nullptr);

}  // namespace cba::train

#endif  // CBA_TRAINER_HPP_

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

// Experiment configuration and the generate -> split -> train -> evaluate
// pipeline shared by the command-line tool and the acceptance suite.

#ifndef CBA_EXPERIMENT_HPP_
#define CBA_EXPERIMENT_HPP_

#include <string>
#include <vector>

#include "json.hpp"

#include "cba/eval.hpp"
#include "cba/synthgen.hpp"
#include "cba/trainer.hpp"

namespace cba {

struct ExperimentConfig {
  synth::GenConfig gen;
  train::TrainConfig train = train::desk_profile();
  double train_fraction = 0.5;
  uint64_t seed = 0;
  // XMA1 file to train on; empty means generate from `gen`.
  std::string dataset;
  std::string output_dir = "runs/default";
  bool write_ranks = false;
  bool dump_clusters = false;
  int ablation_seeds = 5;

  void validate() const;
};

// Flat JSON object. `seed` is required; unknown keys, wrong types and
// invalid values throw kConfigError naming the field.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);

// Applies `--key=value` style overrides to a config document. Values are
// parsed as JSON when possible and kept as strings otherwise.
void apply_override(nlohmann::json& doc, const std::string& key,
                    const std::string& value);

synth::DataSplit make_split(const std::vector<Tracklet>& tracklets,
                            double train_fraction, uint64_t seed);

struct Evaluation {
  eval::RetrievalResult i2v;
  eval::RetrievalResult v2i;
};

Evaluation evaluate_split(const EncoderParams& params,
                          const synth::DataSplit& split);

nlohmann::json to_json(const Evaluation& e);

struct ExperimentResult {
  Evaluation eval;
  std::vector<train::EpochMetrics> history;
  train::TrainState state;
  int n_train_ids = 0;
  // Clustering diagnostics of the last clustering pass, if any.
  bool has_clusters = false;
  eval::ClusterReport clusters;
};

// Trains on the split's train side from a fresh state and evaluates on its
// test side. No files are written.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const synth::DataSplit& split,
                                const train::Hooks& hooks = {});

enum class Variant {
  kBaseline,       // B: intra-modality learning only
  kBaselineCiw,    // B + CIW
  kBaselinePgur,   // B + PGUR
  kFull,           // B + CIW + PGUR
  kNoMpb,
  kNoTtb,
  kNoIcs,
  kMpbV2iOnly,  // visible frames restyled as infrared only
  kMpbI2vOnly,  // infrared frames restyled as visible only
  kNoAmbiguous,
};

std::vector<Variant> all_variants();
const char* to_string(Variant v);
// Switches of `base` adjusted for `v`; everything else is kept.
train::TrainConfig apply_variant(train::TrainConfig base, Variant v);

}  // namespace cba

#endif  // CBA_EXPERIMENT_HPP_

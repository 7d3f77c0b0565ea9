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

#include "cba/experiment.hpp"

#include <functional>
#include <map>

namespace cba {

namespace {

enum Stream : uint64_t { kSplit = 21 };

using json = nlohmann::json;
using Setter = std::function<void(ExperimentConfig&, const json&)>;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::kConfigError, key + ": " + why);
}

int as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) bad(key, "expected an integer");
  const auto x = v.get<int64_t>();
  if (x < INT32_MIN || x > INT32_MAX) bad(key, "out of range");
  return static_cast<int>(x);
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "expected a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad(key, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "expected a string");
  return v.get<std::string>();
}

uint64_t as_u64(const std::string& key, const json& v) {
  if (v.is_number_unsigned()) return v.get<uint64_t>();
  if (!v.is_number_integer() || v.get<int64_t>() < 0) {
    bad(key, "expected a non-negative integer");
  }
  return static_cast<uint64_t>(v.get<int64_t>());
}

const char* mpb_direction(const ciw::InterventionConfig& c) {
  if (c.visible_to_infrared && c.infrared_to_visible) return "both";
  if (c.visible_to_infrared) return "v2i";
  if (c.infrared_to_visible) return "i2v";
  return "none";
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
#define CBA_FIELD(key, target, conv) \
  t[key] = [](ExperimentConfig& c, const json& v) { c.target = conv(key, v); }
    CBA_FIELD("n_ids", gen.n_ids, as_int);
    CBA_FIELD("tracklets_per_id", gen.tracklets_per_id, as_int);
    CBA_FIELD("seq_len", gen.seq_len, as_int);
    CBA_FIELD("channels", gen.channels, as_int);
    CBA_FIELD("height", gen.height, as_int);
    CBA_FIELD("width", gen.width, as_int);
    CBA_FIELD("style_gap", gen.style_gap, as_double);
    CBA_FIELD("style_jitter", gen.style_jitter, as_double);
    CBA_FIELD("granularity_skew", gen.granularity_skew, as_double);
    CBA_FIELD("merge_residual", gen.merge_residual, as_double);
    CBA_FIELD("noise_sigma", gen.noise_sigma, as_double);
    CBA_FIELD("motion_strength", gen.motion_strength, as_double);
    CBA_FIELD("train_fraction", train_fraction, as_double);
    CBA_FIELD("stage1_epochs", train.stage1_epochs, as_int);
    CBA_FIELD("stage2_epochs", train.stage2_epochs, as_int);
    CBA_FIELD("stage3_epochs", train.stage3_epochs, as_int);
    CBA_FIELD("lr", train.lr, as_double);
    CBA_FIELD("lr_late_factor", train.lr_late_factor, as_double);
    CBA_FIELD("batch_per_modality", train.batch_per_modality, as_int);
    CBA_FIELD("dim", train.dim, as_int);
    CBA_FIELD("tau", train.tau, as_double);
    CBA_FIELD("lambda1", train.lambda1, as_double);
    CBA_FIELD("lambda2", train.lambda2, as_double);
    CBA_FIELD("lambda3", train.lambda3, as_double);
    CBA_FIELD("lambda4", train.lambda4, as_double);
    CBA_FIELD("beta1", train.beta1, as_double);
    CBA_FIELD("beta2", train.beta2, as_double);
    CBA_FIELD("adam_eps", train.adam_eps, as_double);
    CBA_FIELD("stage3_keep_ciw", train.stage3_keep_ciw, as_bool);
    CBA_FIELD("use_mpb", train.use_mpb, as_bool);
    CBA_FIELD("use_ttb", train.use_ttb, as_bool);
    CBA_FIELD("use_ics", train.use_ics, as_bool);
    CBA_FIELD("use_pgur", train.use_pgur, as_bool);
    CBA_FIELD("use_ambiguous", train.use_ambiguous, as_bool);
    CBA_FIELD("mpb_frame_fraction", train.intervention.mpb_frame_fraction,
              as_double);
    CBA_FIELD("ttb_swap_count", train.intervention.ttb_swap_count, as_int);
    CBA_FIELD("cluster_eps", train.clustering.eps, as_double);
    CBA_FIELD("cluster_min_pts", train.clustering.min_pts, as_int);
    CBA_FIELD("cluster_momentum", train.clustering.momentum, as_double);
    CBA_FIELD("seed", seed, as_u64);
    CBA_FIELD("dataset", dataset, as_string);
    CBA_FIELD("output_dir", output_dir, as_string);
    CBA_FIELD("write_ranks", write_ranks, as_bool);
    CBA_FIELD("dump_clusters", dump_clusters, as_bool);
    CBA_FIELD("ablation_seeds", ablation_seeds, as_int);
#undef CBA_FIELD
    t["mpb_direction"] = [](ExperimentConfig& c, const json& v) {
      const std::string d = as_string("mpb_direction", v);
      auto& iv = c.train.intervention;
      if (d == "both") {
        iv.visible_to_infrared = iv.infrared_to_visible = true;
      } else if (d == "v2i") {
        iv.visible_to_infrared = true;
        iv.infrared_to_visible = false;
      } else if (d == "i2v") {
        iv.visible_to_infrared = false;
        iv.infrared_to_visible = true;
      } else {
        bad("mpb_direction", "expected \"both\", \"v2i\" or \"i2v\"");
      }
    };
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  gen.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    bad("train_fraction", "must lie strictly between 0 and 1");
  }
  train.validate(static_cast<size_t>(gen.seq_len));
  if (output_dir.empty()) bad("output_dir", "must not be empty");
  if (ablation_seeds < 1) bad("ablation_seeds", "must be >= 1");
}

ExperimentConfig parse_experiment_config(const json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kConfigError, "config must be a JSON object");
  }
  if (!j.contains("seed")) bad("seed", "missing required field");
  ExperimentConfig c;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) bad(key, "unknown key");
    it->second(c, value);
  }
  c.gen.seed = c.seed;
  c.train.seed = c.seed;
  c.train.intervention.tau = c.train.tau;
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = train::to_json(c.train);
  j.erase("mpb_visible_to_infrared");
  j.erase("mpb_infrared_to_visible");
  j["mpb_direction"] = mpb_direction(c.train.intervention);
  j["n_ids"] = c.gen.n_ids;
  j["tracklets_per_id"] = c.gen.tracklets_per_id;
  j["seq_len"] = c.gen.seq_len;
  j["channels"] = c.gen.channels;
  j["height"] = c.gen.height;
  j["width"] = c.gen.width;
  j["style_gap"] = c.gen.style_gap;
  j["style_jitter"] = c.gen.style_jitter;
  j["granularity_skew"] = c.gen.granularity_skew;
  j["merge_residual"] = c.gen.merge_residual;
  j["noise_sigma"] = c.gen.noise_sigma;
  j["motion_strength"] = c.gen.motion_strength;
  j["train_fraction"] = c.train_fraction;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset;
  j["output_dir"] = c.output_dir;
  j["write_ranks"] = c.write_ranks;
  j["dump_clusters"] = c.dump_clusters;
  j["ablation_seeds"] = c.ablation_seeds;
  return j;
}

void apply_override(json& doc, const std::string& key,
                    const std::string& value) {
  json v = json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (v.is_discarded()) v = value;
  doc[key] = v;
}

synth::DataSplit make_split(const std::vector<Tracklet>& tracklets,
                            double train_fraction, uint64_t seed) {
  Rng rng = Rng(seed).derive(kSplit);
  return synth::split(tracklets, train_fraction, rng);
}

Evaluation evaluate_split(const EncoderParams& params,
                          const synth::DataSplit& split) {
  auto features = [&](const std::vector<Tracklet>& ts, std::vector<Vec>& f,
                      std::vector<int>& ids) {
    for (const auto& tr : ts) {
      f.push_back(encode(params, tr).f);
      ids.push_back(tr.true_id);
    }
  };
  std::vector<Vec> fv, fi;
  std::vector<int> iv, ii;
  features(split.test_visible, fv, iv);
  features(split.test_infrared, fi, ii);
  Evaluation e;
  e.i2v = eval::evaluate(fi, fv, ii, iv, synth::Direction::kI2V);
  e.v2i = eval::evaluate(fv, fi, iv, ii, synth::Direction::kV2I);
  return e;
}

json to_json(const Evaluation& e) {
  return {{"I2V", eval::to_json(e.i2v)}, {"V2I", eval::to_json(e.v2i)}};
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const synth::DataSplit& split,
                                const train::Hooks& hooks) {
  config.validate();
  if (split.train.empty()) {
    throw Error(ErrorCode::kSplitTooSmall, "empty train split");
  }
  ExperimentResult out;
  out.n_train_ids = static_cast<int>(split.train_ids.size());
  std::vector<int> truth[2];
  for (const auto& tr : split.train) {
    truth[static_cast<int>(tr.modality)].push_back(tr.true_id);
  }

  std::vector<int> last_labels[2];
  train::Hooks h = hooks;
  h.on_labels = [&](int epoch, Modality m, std::span<const int> labels) {
    last_labels[static_cast<int>(m)].assign(labels.begin(), labels.end());
    if (hooks.on_labels) hooks.on_labels(epoch, m, labels);
  };

  const Tracklet& first = split.train.front();
  out.state = train::init_state(config.train, first.shape.size());
  train::run_all(out.state, split.train, config.train, h);
  out.history = out.state.history;
  if (!last_labels[0].empty() && !last_labels[1].empty()) {
    out.has_clusters = true;
    out.clusters = eval::cluster_diagnostics(last_labels[0], truth[0],
                                             last_labels[1], truth[1]);
  }
  out.eval = evaluate_split(out.state.params, split);
  return out;
}

std::vector<Variant> all_variants() {
  return {Variant::kBaseline,   Variant::kBaselineCiw, Variant::kBaselinePgur,
          Variant::kFull,       Variant::kNoMpb,       Variant::kNoTtb,
          Variant::kNoIcs,      Variant::kMpbV2iOnly,  Variant::kMpbI2vOnly,
          Variant::kNoAmbiguous};
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "B";
    case Variant::kBaselineCiw: return "B+CIW";
    case Variant::kBaselinePgur: return "B+PGUR";
    case Variant::kFull: return "B+CIW+PGUR";
    case Variant::kNoMpb: return "full-noMPB";
    case Variant::kNoTtb: return "full-noTTB";
    case Variant::kNoIcs: return "full-noICS";
    case Variant::kMpbV2iOnly: return "full-MPB-v2i";
    case Variant::kMpbI2vOnly: return "full-MPB-i2v";
    case Variant::kNoAmbiguous: return "full-noAmb";
  }
  return "?";
}

train::TrainConfig apply_variant(train::TrainConfig c, Variant v) {
  c.use_mpb = c.use_ttb = c.use_ics = c.use_pgur = c.use_ambiguous = true;
  c.intervention.visible_to_infrared = c.intervention.infrared_to_visible = true;
  switch (v) {
    case Variant::kBaseline:
      c.use_mpb = c.use_ttb = c.use_ics = c.use_pgur = false;
      break;
    case Variant::kBaselineCiw:
      c.use_pgur = false;
      break;
    case Variant::kBaselinePgur:
      c.use_mpb = c.use_ttb = c.use_ics = false;
      break;
    case Variant::kFull:
      break;
    case Variant::kNoMpb:
      c.use_mpb = false;
      break;
    case Variant::kNoTtb:
      c.use_ttb = false;
      break;
    case Variant::kNoIcs:
      c.use_ics = false;
      break;
    case Variant::kMpbV2iOnly:
      c.intervention.infrared_to_visible = false;
      break;
    case Variant::kMpbI2vOnly:
      c.intervention.visible_to_infrared = false;
      break;
    case Variant::kNoAmbiguous:
      c.use_ambiguous = false;
      break;
  }
  return c;
}

}  // namespace cba

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

// cba: command-line driver for dataset generation, training, evaluation and
// the ablation matrix.
//
//   cba generate --config c.json --out data.xma [--key=value ...]
//   cba train    [--config c.json] [--resume] [--no-pgur ...] [--key=value ...]
//   cba eval     --checkpoint run/checkpoint.cba --dataset data.xma
//   cba ablate   [--config c.json] [--variant NAME ...] [--key=value ...]
//
// Exit status: 0 ok, 2 configuration, 3 I/O or corrupt file, 4 numerical
// divergence, 1 anything else.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cba/binary.hpp"
#include "cba/cluster.hpp"
#include "cba/core.hpp"
#include "cba/dataset_io.hpp"
#include "cba/eval.hpp"
#include "cba/experiment.hpp"
#include "cba/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

int exit_code(cba::ErrorCode code) {
  switch (code) {
    case cba::ErrorCode::kConfigError:
    case cba::ErrorCode::kSplitTooSmall:
      return kExitConfig;
    case cba::ErrorCode::kIoError:
    case cba::ErrorCode::kCorruptFile:
      return kExitIo;
    case cba::ErrorCode::kNumericalDivergence:
      return kExitDivergence;
    default:
      return kExitOther;
  }
}

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> extras;  // leftover --key=value tokens
  bool no_pgur = false, no_mpb = false, no_ttb = false, no_ics = false;
  bool no_ciw = false, no_amb = false;
  std::string mpb_direction;
};

void add_config_options(CLI::App* cmd, ConfigArgs& a, bool switches) {
  cmd->add_option("--config", a.config_path, "JSON experiment config");
  if (switches) {
    cmd->add_flag("--no-pgur", a.no_pgur, "disable prototype-guided refinement");
    cmd->add_flag("--no-mpb", a.no_mpb, "disable modality-perturbation views");
    cmd->add_flag("--no-ttb", a.no_ttb, "disable temporal-topology views");
    cmd->add_flag("--no-ics", a.no_ics, "disable the identity-consistency term");
    cmd->add_flag("--no-ciw", a.no_ciw, "disable all intervention terms");
    cmd->add_flag("--no-amb", a.no_amb, "drop the ambiguous-association terms");
    cmd->add_option("--mpb-direction", a.mpb_direction, "both, v2i or i2v");
  }
  cmd->allow_extras();
}

json read_json_file(const std::string& path) {
  const std::string raw = cba::io::read_file(path);
  json j = json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw cba::Error(cba::ErrorCode::kConfigError, path + ": not valid JSON");
  }
  return j;
}

cba::ExperimentConfig load_config(const ConfigArgs& a) {
  json doc = json::object();
  if (!a.config_path.empty()) doc = read_json_file(a.config_path);
  if (!doc.is_object()) {
    throw cba::Error(cba::ErrorCode::kConfigError,
                     "config must be a JSON object");
  }
  for (const std::string& tok : a.extras) {
    if (tok.rfind("--", 0) != 0 || tok.find('=') == std::string::npos) {
      throw cba::Error(cba::ErrorCode::kConfigError,
                       "unexpected argument '" + tok + "'");
    }
    const size_t eq = tok.find('=');
    cba::apply_override(doc, tok.substr(2, eq - 2), tok.substr(eq + 1));
  }
  if (a.no_pgur) doc["use_pgur"] = false;
  if (a.no_mpb || a.no_ciw) doc["use_mpb"] = false;
  if (a.no_ttb || a.no_ciw) doc["use_ttb"] = false;
  if (a.no_ics || a.no_ciw) doc["use_ics"] = false;
  if (a.no_amb) doc["use_ambiguous"] = false;
  if (!a.mpb_direction.empty()) doc["mpb_direction"] = a.mpb_direction;
  return cba::parse_experiment_config(doc);
}

std::string output_dir(const cba::ExperimentConfig& c) {
  fs::path p(c.output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("CBA_OUTPUT_ROOT"); root && *root) {
      p = fs::path(root) / p;
    }
  }
  return p.string();
}

std::vector<cba::Tracklet> load_tracklets(const cba::ExperimentConfig& c) {
  if (!c.dataset.empty()) return cba::io::read_dataset(c.dataset).tracklets;
  return cba::synth::generate(c.gen);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  cba::io::write_file(path, j.dump(2) + "\n");
}

json checkpoint_header(const cba::ExperimentConfig& c) {
  json h;
  h["seed"] = c.seed;
  h["train_fraction"] = c.train_fraction;
  h["generator"] = cba::io::to_json(c.gen);
  h["train"] = cba::train::to_json(c.train);
  return h;
}

// Keeps the metric lines of epochs before `epoch`, so a resumed run appends
// where the checkpoint left off.
std::string kept_metrics(const std::string& path, int epoch) {
  std::ifstream in(path);
  std::string line, out;
  while (std::getline(in, line)) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.value("epoch", epoch) < epoch) out += line + "\n";
  }
  return out;
}

int cmd_generate(const ConfigArgs& a, const std::string& out) {
  const cba::ExperimentConfig c = load_config(a);
  const auto tracklets = cba::synth::generate(c.gen);
  json meta;
  meta["generator"] = cba::io::to_json(c.gen);
  meta["infrared_templates"] = cba::synth::count_infrared_templates(c.gen);
  cba::io::write_dataset(out, tracklets, meta);
  std::cout << "wrote " << tracklets.size() << " tracklets to " << out << "\n";
  return kExitOk;
}

int cmd_train(const ConfigArgs& a, bool resume) {
  const cba::ExperimentConfig c = load_config(a);
  const std::string dir = output_dir(c);
  fs::create_directories(dir);
  const std::string ckpt = join(dir, "checkpoint.cba");
  const std::string metrics_path = join(dir, "metrics.jsonl");

  const auto tracklets = load_tracklets(c);
  const cba::synth::DataSplit split =
      cba::make_split(tracklets, c.train_fraction, c.seed);
  const json header = checkpoint_header(c);

  cba::train::TrainState state;
  std::string metrics;
  if (resume && fs::exists(ckpt)) {
    json h;
    state = cba::train::load_checkpoint(ckpt, &h);
    if (h.value("seed", c.seed) != c.seed) {
      throw cba::Error(cba::ErrorCode::kConfigError,
                       "seed: checkpoint was trained with a different seed");
    }
    metrics = kept_metrics(metrics_path, state.epoch);
    std::cout << "resuming at epoch " << state.epoch << "\n";
  } else {
    state = cba::train::init_state(c.train, split.train.front().shape.size());
    fs::remove_all(join(dir, "association"));
  }
  const int start_epoch = state.epoch;
  cba::io::write_file(metrics_path, metrics);
  std::ofstream metrics_out(metrics_path, std::ios::app);

  std::vector<int> labels[2];
  cba::train::Hooks hooks;
  hooks.on_epoch = [&](const cba::train::EpochMetrics& m,
                       const cba::train::TrainState& s) {
    metrics_out << m.to_json().dump() << "\n";
    metrics_out.flush();
    cba::train::save_checkpoint(ckpt, s, header);
    std::cout << "epoch " << m.epoch << " stage " << m.stage << " loss "
              << m.l_total << "\n";
  };
  hooks.on_association = [&](int epoch, const json& summary) {
    char epoch_name[32];
    std::snprintf(epoch_name, sizeof epoch_name, "epoch_%03d.json", epoch);
    write_json(join(join(dir, "association"), epoch_name), summary);
  };
  hooks.on_labels = [&](int, cba::Modality m, std::span<const int> l) {
    labels[static_cast<int>(m)].assign(l.begin(), l.end());
  };

  try {
    cba::train::run_all(state, split.train, c.train, hooks);
  } catch (const cba::Error& e) {
    if (e.code() == cba::ErrorCode::kNumericalDivergence) {
      std::cerr << "error: " << e.what() << "; last good checkpoint at "
                << ckpt << "\n";
    }
    throw;
  }
  cba::train::save_checkpoint(ckpt, state, header);

  const cba::Evaluation ev = cba::evaluate_split(state.params, split);
  json results = cba::to_json(ev);
  results["epochs"] = state.epoch;
  results["n_train_ids"] = split.train_ids.size();
  results["n_test_ids"] = split.test_ids.size();
  write_json(join(dir, "results.json"), results);

  if (c.write_ranks) {
    const cba::eval::RetrievalResult both[2] = {ev.i2v, ev.v2i};
    cba::eval::write_ranks_csv(join(dir, "ranks.csv"), both);
  }
  if (c.dump_clusters && !labels[0].empty() && !labels[1].empty()) {
    const std::string cdir = join(dir, "clusters");
    cba::cluster::write_labels_csv(join(cdir, "labels_visible.csv"),
                                   labels[0], cba::Modality::kVisible);
    cba::cluster::write_labels_csv(join(cdir, "labels_infrared.csv"),
                                   labels[1], cba::Modality::kInfrared);
    if (state.bank_vis) {
      cba::cluster::write_prototypes(join(cdir, "prototypes_visible.cbap"),
                                     *state.bank_vis);
    }
    if (state.bank_ir) {
      cba::cluster::write_prototypes(join(cdir, "prototypes_infrared.cbap"),
                                     *state.bank_ir);
    }
  }

  json manifest;
  manifest["config"] = cba::to_json(c);
  manifest["dataset"] = c.dataset.empty() ? "generated" : c.dataset;
  manifest["resumed_from_epoch"] = start_epoch;
  manifest["epochs_completed"] = state.epoch;
  manifest["stage"] = state.stage;
  manifest["checkpoint"] = "checkpoint.cba";
  manifest["metrics"] = "metrics.jsonl";
  manifest["results"] = "results.json";
  write_json(join(dir, "manifest.json"), manifest);

  std::cout << "Rank-1 I2V " << ev.i2v.rank_k.at(1) << " mAP "
            << ev.i2v.map_score << " | V2I " << ev.v2i.rank_k.at(1)
            << " mAP " << ev.v2i.map_score << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset,
             const std::string& out) {
  json h;
  const cba::train::TrainState state =
      cba::train::load_checkpoint(checkpoint, &h);
  if (!h.contains("seed") || !h.contains("train_fraction")) {
    throw cba::Error(cba::ErrorCode::kCorruptFile,
                     checkpoint + ": header lacks seed or train_fraction");
  }
  const auto data = cba::io::read_dataset(dataset);
  const cba::synth::DataSplit split =
      cba::make_split(data.tracklets, h["train_fraction"].get<double>(),
                      h["seed"].get<uint64_t>());
  const json results = cba::to_json(cba::evaluate_split(state.params, split));
  if (!out.empty()) write_json(out, results);
  std::cout << results.dump(2) << "\n";
  return kExitOk;
}

int cmd_ablate(const ConfigArgs& a, std::vector<std::string> names) {
  const cba::ExperimentConfig base = load_config(a);
  std::vector<cba::Variant> variants;
  for (cba::Variant v : cba::all_variants()) {
    bool want = names.empty();
    for (const auto& n : names) want |= n == cba::to_string(v);
    if (want) variants.push_back(v);
  }
  if (variants.empty()) {
    throw cba::Error(cba::ErrorCode::kConfigError, "variant: none matched");
  }
  const std::string dir = output_dir(base);
  fs::create_directories(dir);

  std::ostringstream csv;
  csv << "variant,seed,r1_i2v,map_i2v,r1_v2i,map_v2i,k_vis,k_ir,k_refined\n";
  for (int s = 0; s < base.ablation_seeds; ++s) {
    cba::ExperimentConfig c = base;
    c.seed = base.seed + static_cast<uint64_t>(s);
    c.gen.seed = c.train.seed = c.seed;
    const auto tracklets = load_tracklets(c);
    const auto split = cba::make_split(tracklets, c.train_fraction, c.seed);
    for (cba::Variant v : variants) {
      cba::ExperimentConfig vc = c;
      vc.train = cba::apply_variant(c.train, v);
      const cba::ExperimentResult r = cba::run_experiment(vc, split);
      int kv = -1, ki = -1, kr = -1;
      if (!r.history.empty()) {
        kv = r.history.back().k_vis;
        ki = r.history.back().k_ir;
        kr = r.history.back().k_refined;
      }
      csv << cba::to_string(v) << "," << c.seed << ","
          << r.eval.i2v.rank_k.at(1) << "," << r.eval.i2v.map_score << ","
          << r.eval.v2i.rank_k.at(1) << "," << r.eval.v2i.map_score << ","
          << kv << "," << ki << "," << kr << "\n";
      std::cout << cba::to_string(v) << " seed " << c.seed << " R1(I2V) "
                << r.eval.i2v.rank_k.at(1) << " mAP(I2V) "
                << r.eval.i2v.map_score << "\n";
    }
  }
  const std::string path = join(dir, "ablation.csv");
  cba::io::write_file(path, csv.str());
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal bootstrapped alignment for visible-infrared video re-id"};
  app.require_subcommand(1);

  ConfigArgs gen_args, train_args, ablate_args;
  std::string gen_out, ckpt, dataset, eval_out;
  bool resume = false;
  std::vector<std::string> variant_names;

  auto* gen = app.add_subcommand("generate", "write a synthetic XMA1 dataset");
  add_config_options(gen, gen_args, false);
  gen->add_option("--out", gen_out, "output dataset path")->required();

  auto* train = app.add_subcommand("train", "run the three-stage schedule");
  add_config_options(train, train_args, true);
  train->add_flag("--resume", resume, "continue from output_dir/checkpoint.cba");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ev->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  ev->add_option("--dataset", dataset, "XMA1 dataset")->required();
  ev->add_option("--out", eval_out, "also write the results JSON here");

  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix");
  add_config_options(ablate, ablate_args, true);
  ablate->add_option("--variant", variant_names, "restrict to these variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      gen_args.extras = gen->remaining();
      return cmd_generate(gen_args, gen_out);
    }
    if (*train) {
      train_args.extras = train->remaining();
      return cmd_train(train_args, resume);
    }
    if (*ev) return cmd_eval(ckpt, dataset, eval_out);
    if (*ablate) {
      ablate_args.extras = ablate->remaining();
      return cmd_ablate(ablate_args, variant_names);
    }
  } catch (const cba::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}

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

#include "cba/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "cba/binary.hpp"
#include "cba/rng.hpp"

namespace cba::train {

namespace {

enum Stream : uint64_t { kInit = 11, kEpochs = 12 };
enum EpochStream : uint64_t { kShuffle = 1, kBatches = 2 };
enum BatchStream : uint64_t { kMpb = 1, kTtb = 2, kIcs = 3 };

constexpr char kAdamMagic[4] = {'A', 'D', 'A', 'M'};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfigError, what);
}

int mod_index(Modality m) { return static_cast<int>(m); }

// Adds an NCE term between originals and their counterfactual views; the
// view gradients are pushed straight into `grads`.
double nce_term(const EncoderParams& params,
                std::span<const SeqFeature> fwd,
                std::span<const ciw::CounterfactualPair> views, double tau,
                double weight, std::vector<Vec>& orig_grads,
                EncoderGrads& grads) {
  std::vector<Vec> o, c;
  std::vector<SeqFeature> view_fwd;
  for (size_t k = 0; k < views.size(); ++k) {
    o.push_back(fwd[k].f);
    view_fwd.push_back(encode(params, views[k].intervened));
    c.push_back(view_fwd.back().f);
  }
  const ciw::NceResult r = ciw::bidirectional_nce(o, c, tau);
  for (size_t k = 0; k < views.size(); ++k) {
    axpy(weight, r.grad_originals[k], orig_grads[k]);
    Vec g = r.grad_counterfactuals[k];
    for (double& x : g) x *= weight;
    accumulate_backprop(params, views[k].intervened, view_fwd[k],
                        FeatureGrad{std::move(g), {}}, grads);
  }
  return r.loss;
}

bool all_zero(const EncoderGrads& g) {
  auto zero = [](double v) { return v == 0.0; };
  return std::all_of(g.weight.begin(), g.weight.end(), zero) &&
         std::all_of(g.bias.begin(), g.bias.end(), zero);
}

void run_epoch(TrainState& state, std::span<const Tracklet> train,
               const TrainConfig& config, const Hooks& hooks) {
  const int e = state.epoch;
  const int stage = config.stage_of(e);
  const Rng er = Rng(config.seed).derive(kEpochs).derive(e);

  std::vector<size_t> members[2];
  for (size_t n = 0; n < train.size(); ++n) {
    members[mod_index(train[n].modality)].push_back(n);
  }
  if (members[0].empty() || members[1].empty()) {
    throw Error(ErrorCode::kConfigError,
                "training needs tracklets of both modalities");
  }

  EpochMetrics mt;
  mt.epoch = e;
  mt.stage = stage;
  mt.lr = config.lr_at(e);

  BatchContext ctx;
  std::vector<int> labels[2];
  if (stage == 1) {
    state.bank_vis.reset();
    state.bank_ir.reset();
  } else {
    std::vector<Vec> feats[2];
    for (int m = 0; m < 2; ++m) {
      for (size_t n : members[m]) {
        feats[m].push_back(encode(state.params, train[n]).f);
      }
      const cluster::PseudoLabels pl = cluster::dbscan(
          feats[m], config.clustering.eps, config.clustering.min_pts);
      labels[m] = pl.labels;
      if (hooks.on_labels) {
        hooks.on_labels(e, static_cast<Modality>(m), labels[m]);
      }
      auto& bank = m == 0 ? state.bank_vis : state.bank_ir;
      if (pl.k > 0) {
        bank = cluster::build_bank(feats[m], labels[m],
                                   static_cast<Modality>(m),
                                   config.clustering.momentum);
      } else {
        bank.reset();
        std::clog << "warning: epoch " << e << ": no "
                  << to_string(static_cast<Modality>(m))
                  << " clusters, intra-modality term skipped\n";
      }
      (m == 0 ? mt.k_vis : mt.k_ir) = pl.k;
    }
    ctx.bank[0] = state.bank_vis ? &*state.bank_vis : nullptr;
    ctx.bank[1] = state.bank_ir ? &*state.bank_ir : nullptr;

    state.report.reset();
    state.refined.reset();
    if (stage == 3 && config.use_pgur) {
      if (state.bank_vis && state.bank_ir) {
        state.report = pgur::progressive_match(*state.bank_vis, *state.bank_ir);
        state.refined = pgur::reconstruct(feats[1], labels[1], *state.bank_vis,
                                          *state.bank_ir, *state.report);
        if (!state.refined->dropped.empty()) {
          std::clog << "note: epoch " << e << ": dropped "
                    << state.refined->dropped.size()
                    << " empty sub-cluster(s)\n";
        }
        mt.k_refined = static_cast<int>(state.refined->k());
        mt.reliable = static_cast<int>(state.report->reliable.size());
        mt.ambiguous = static_cast<int>(state.report->ambiguous.size());
        mt.dropped = static_cast<int>(state.refined->dropped.size());
        if (hooks.on_association) {
          hooks.on_association(
              e, pgur::association_summary(*state.report, *state.refined));
        }
        if (state.refined->k() > 0) ctx.refined = &*state.refined;
      } else {
        mt.pgur_skipped = true;
        std::clog << "warning: epoch " << e
                  << ": a modality has no clusters, refinement skipped\n";
      }
    }
  }
  ctx.ciw = config.ciw_enabled() &&
            (stage == 1 || (stage == 3 && config.stage3_keep_ciw));

  std::vector<size_t> order[2];
  for (int m = 0; m < 2; ++m) {
    order[m].resize(members[m].size());
    for (size_t k = 0; k < order[m].size(); ++k) order[m][k] = k;
    Rng shuffle = er.derive(kShuffle).derive(m);
    shuffle.shuffle(order[m]);
  }
  const size_t B = static_cast<size_t>(config.batch_per_modality);
  const size_t n_batches =
      std::max<size_t>(1, std::max(members[0].size(), members[1].size()) / B);

  double sums[7] = {0, 0, 0, 0, 0, 0, 0};
  for (size_t b = 0; b < n_batches; ++b) {
    Batch batch;
    for (int m = 0; m < 2; ++m) {
      const size_t n = members[m].size();
      const size_t take = std::min(B, n);
      for (size_t k = 0; k < take; ++k) {
        const size_t pos = order[m][(b * B + k) % n];
        batch.tracklets[m].push_back(&train[members[m][pos]]);
        batch.labels[m].push_back(stage == 1 ? cluster::kNoise
                                             : labels[m][pos]);
      }
    }
    const std::string where =
        "epoch " + std::to_string(e) + " batch " + std::to_string(b);
    BatchLoss bo;
    try {
      bo = batch_loss(state.params, batch, ctx, config,
                      er.derive(kBatches).derive(b));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kDegenerateVector) throw;
      throw Error(ErrorCode::kNumericalDivergence,
                  where + ": " + std::string(err.what()));
    }
    if (!std::isfinite(bo.total) || !all_finite(bo.grads.weight) ||
        !all_finite(bo.grads.bias)) {
      throw Error(ErrorCode::kNumericalDivergence,
                  where + ": non-finite loss or gradient");
    }
    if (!all_zero(bo.grads)) {
      const EncoderParams before = state.params;
      const Adam adam_before = state.adam;
      state.adam.step_params(state.params, bo.grads, mt.lr, config);
      if (!all_finite(state.params.weight) || !all_finite(state.params.bias)) {
        state.params = before;
        state.adam = adam_before;
        throw Error(ErrorCode::kNumericalDivergence,
                    where + ": optimizer step left non-finite parameters");
      }
      ++mt.steps;
    }
    for (int m = 0; m < 2; ++m) {
      if (ctx.bank[m]) {
        auto& bank = m == 0 ? *state.bank_vis : *state.bank_ir;
        cluster::apply_momentum(bank, bo.features[m], batch.labels[m]);
      }
    }
    mt.pgur_skipped_samples += bo.pgur_skipped;
    const double parts[7] = {bo.total, bo.intra, bo.ciw, bo.mpb,
                             bo.ttb,   bo.seq,   bo.pgur};
    for (int i = 0; i < 7; ++i) sums[i] += parts[i];
  }
  const double inv = 1.0 / static_cast<double>(n_batches);
  mt.l_total = sums[0] * inv;
  mt.l_intra = sums[1] * inv;
  mt.l_ciw = sums[2] * inv;
  mt.l_mpb = sums[3] * inv;
  mt.l_ttb = sums[4] * inv;
  mt.l_seq = sums[5] * inv;
  mt.l_pgur = sums[6] * inv;

  state.epoch = e + 1;
  state.stage = stage;
  state.history.push_back(mt);
  if (hooks.on_epoch) hooks.on_epoch(mt, state);
}

void run_until(TrainState& state, std::span<const Tracklet> train,
               const TrainConfig& config, const Hooks& hooks, int end) {
  while (state.epoch < end) run_epoch(state, train, config, hooks);
}

}  // namespace

BatchLoss batch_loss(const EncoderParams& params, const Batch& input,
                     const BatchContext& ctx, const TrainConfig& config,
                     const Rng& rng) {
  const auto& batch = input.tracklets;
  const auto& batch_labels = input.labels;
  for (int m = 0; m < 2; ++m) {
    if (batch_labels[m].size() != batch[m].size()) {
      throw Error(ErrorCode::kLabelMismatch, "batch labels and tracklets differ");
    }
  }
  BatchLoss out;
  out.grads = EncoderParams::zeros(params.dim, params.input_dim);
  std::vector<SeqFeature> fwd[2];
  std::vector<FeatureGrad> fg[2];
  for (int m = 0; m < 2; ++m) {
    for (const Tracklet* tr : batch[m]) {
      fwd[m].push_back(encode(params, *tr));
      out.features[m].push_back(fwd[m].back().f);
      FeatureGrad g;
      g.f.assign(params.dim, 0.0);
      fg[m].push_back(std::move(g));
    }
  }

  if (ctx.ciw) {
    for (int m = 0; m < 2; ++m) {
      const size_t B = batch[m].size();
      if (B < 2) continue;
      const auto modality = static_cast<Modality>(m);
      std::vector<Vec> orig_grads(B, Vec(params.dim, 0.0));
      Rng rng_mpb = rng.derive(kMpb).derive(m);
      Rng rng_ttb = rng.derive(kTtb).derive(m);
      Rng rng_ics = rng.derive(kIcs).derive(m);
      if (config.use_mpb && config.intervention.perturbs(modality) &&
          !batch[1 - m].empty()) {
        std::vector<ciw::CounterfactualPair> views;
        for (const Tracklet* tr : batch[m]) {
          views.push_back(ciw::make_mpb_view(*tr, batch[1 - m],
                                             config.intervention, rng_mpb));
        }
        out.mpb += nce_term(params, fwd[m], views, config.tau, 1.0,
                            orig_grads, out.grads);
      }
      if (config.use_ttb) {
        std::vector<ciw::CounterfactualPair> views;
        for (const Tracklet* tr : batch[m]) {
          views.push_back(
              ciw::make_ttb_view(*tr, config.intervention, rng_ttb));
        }
        out.ttb += nce_term(params, fwd[m], views, config.tau, config.lambda1,
                            orig_grads, out.grads);
      }
      if (config.use_ics) {
        const size_t T = batch[m].front()->seq_len;
        std::vector<Vec> pool;
        for (const auto& f : fwd[m]) {
          pool.insert(pool.end(), f.frame_feats.begin(), f.frame_feats.end());
        }
        const auto groups = ciw::build_ics_groups(B, T, rng_ics);
        const ciw::WrtResult r = ciw::ics_wrt_loss(pool, groups);
        out.seq += r.loss;
        for (size_t k = 0; k < B; ++k) {
          fg[m][k].frames.assign(T, Vec(params.dim, 0.0));
          for (size_t t = 0; t < T; ++t) {
            axpy(config.lambda2, r.grads[k * T + t], fg[m][k].frames[t]);
          }
        }
      }
      for (size_t k = 0; k < B; ++k) axpy(1.0, orig_grads[k], fg[m][k].f);
    }
    out.ciw = out.mpb + config.lambda1 * out.ttb + config.lambda2 * out.seq;
  }

  for (int m = 0; m < 2; ++m) {
    if (!ctx.bank[m] || batch[m].empty()) continue;
    const cluster::IntraResult r = cluster::intra_loss(
        out.features[m], batch_labels[m], *ctx.bank[m], config.tau);
    out.intra += r.loss;
    for (size_t k = 0; k < batch[m].size(); ++k) {
      axpy(1.0, r.grads[k], fg[m][k].f);
    }
  }

  if (ctx.refined) {
    constexpr int kV = 0, kI = 1;
    pgur::PgurConfig pc;
    pc.tau = config.tau;
    pc.lambda_ir = config.lambda3;
    pc.lambda_vis = config.lambda4;
    pc.use_ambiguous = config.use_ambiguous;
    const pgur::PgurResult r =
        pgur::pgur_loss(out.features[kI], batch_labels[kI], out.features[kV],
                        batch_labels[kV], *ctx.refined, pc);
    out.pgur = r.loss;
    out.pgur_skipped = r.skipped;
    for (size_t k = 0; k < batch[kI].size(); ++k) {
      axpy(1.0, r.grads_ir[k], fg[kI][k].f);
    }
    for (size_t k = 0; k < batch[kV].size(); ++k) {
      axpy(1.0, r.grads_vis[k], fg[kV][k].f);
    }
  }

  for (int m = 0; m < 2; ++m) {
    for (size_t k = 0; k < batch[m].size(); ++k) {
      accumulate_backprop(params, *batch[m][k], fwd[m][k], fg[m][k],
                          out.grads);
    }
  }
  out.total = out.intra + out.ciw + out.pgur;
  return out;
}

void TrainConfig::validate(size_t seq_len) const {
  require(stage1_epochs >= 0 && stage2_epochs >= 0 && stage3_epochs >= 0,
          "stage epochs: must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), "lr: must be positive");
  require(lr_late_factor > 0.0 && std::isfinite(lr_late_factor),
          "lr_late_factor: must be positive");
  require(batch_per_modality >= 2, "batch_per_modality: must be >= 2");
  require(dim >= 2, "dim: must be >= 2");
  require(tau > 0.0, "tau: must be positive");
  require(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0 && lambda4 >= 0.0,
          "lambda1..lambda4: must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0, "beta1: must lie in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "beta2: must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps: must be positive");
  require(clustering.eps > 0.0, "cluster_eps: must be positive");
  require(clustering.min_pts >= 1, "cluster_min_pts: must be >= 1");
  require(clustering.momentum >= 0.0 && clustering.momentum < 1.0,
          "cluster_momentum: must lie in [0, 1)");
  intervention.validate(seq_len);
}

int TrainConfig::stage_of(int epoch) const {
  if (epoch < stage1_epochs) return 1;
  if (epoch < stage1_epochs + stage2_epochs) return 2;
  return 3;
}

double TrainConfig::lr_at(int epoch) const {
  if (stage_of(epoch) == 1) {
    const double x = static_cast<double>(epoch) / stage1_epochs;
    return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
  }
  return lr * lr_late_factor;
}

TrainConfig desk_profile() {
  TrainConfig c;
  c.stage1_epochs = 40;
  c.stage2_epochs = 20;
  c.stage3_epochs = 30;
  c.lr = 1e-3;
  c.lr_late_factor = 0.01;
  c.batch_per_modality = 8;
  c.clustering.eps = 0.45;
  c.clustering.min_pts = 2;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {
      {"stage1_epochs", c.stage1_epochs},
      {"stage2_epochs", c.stage2_epochs},
      {"stage3_epochs", c.stage3_epochs},
      {"lr", c.lr},
      {"lr_late_factor", c.lr_late_factor},
      {"batch_per_modality", c.batch_per_modality},
      {"dim", c.dim},
      {"tau", c.tau},
      {"lambda1", c.lambda1},
      {"lambda2", c.lambda2},
      {"lambda3", c.lambda3},
      {"lambda4", c.lambda4},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"stage3_keep_ciw", c.stage3_keep_ciw},
      {"use_mpb", c.use_mpb},
      {"use_ttb", c.use_ttb},
      {"use_ics", c.use_ics},
      {"use_pgur", c.use_pgur},
      {"use_ambiguous", c.use_ambiguous},
      {"mpb_frame_fraction", c.intervention.mpb_frame_fraction},
      {"ttb_swap_count", c.intervention.ttb_swap_count},
      {"mpb_visible_to_infrared", c.intervention.visible_to_infrared},
      {"mpb_infrared_to_visible", c.intervention.infrared_to_visible},
      {"cluster_eps", c.clustering.eps},
      {"cluster_min_pts", c.clustering.min_pts},
      {"cluster_momentum", c.clustering.momentum},
      {"seed", c.seed},
  };
}

void Adam::step_params(EncoderParams& params, const EncoderGrads& grads,
                       double lr, const TrainConfig& config) {
  const size_t nw = params.weight.size();
  const size_t n = params.size();
  if (grads.weight.size() != nw || grads.size() != n) {
    throw Error(ErrorCode::kShapeError, "gradient shape mismatch");
  }
  if (m.empty()) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  ++step;
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (size_t i = 0; i < n; ++i) {
    const double g = i < nw ? grads.weight[i] : grads.bias[i - nw];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double delta =
        lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.adam_eps);
    if (i < nw) {
      params.weight[i] -= delta;
    } else {
      params.bias[i - nw] -= delta;
    }
  }
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {
      {"epoch", epoch},       {"stage", stage},       {"lr", lr},
      {"steps", steps},       {"l_total", l_total},   {"l_intra", l_intra},
      {"l_ciw", l_ciw},       {"l_mpb", l_mpb},       {"l_ttb", l_ttb},
      {"l_seq", l_seq},       {"l_pgur", l_pgur},
  };
  if (k_vis >= 0) j["k_vis"] = k_vis;
  if (k_ir >= 0) j["k_ir"] = k_ir;
  if (k_refined >= 0) {
    j["k_refined"] = k_refined;
    j["reliable"] = reliable;
    j["ambiguous"] = ambiguous;
    j["dropped"] = dropped;
    j["pgur_skipped_samples"] = pgur_skipped_samples;
  }
  if (pgur_skipped) j["pgur_skipped"] = true;
  return j;
}

TrainState init_state(const TrainConfig& config, size_t input_dim) {
  Rng rng = Rng(config.seed).derive(kInit);
  TrainState s;
  s.params = EncoderParams::random(static_cast<size_t>(config.dim), input_dim,
                                   rng);
  return s;
}

void run_stage1(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks) {
  run_until(state, train, config, hooks, config.stage1_epochs);
}

void run_stage2(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks) {
  run_until(state, train, config, hooks,
            config.stage1_epochs + config.stage2_epochs);
}

void run_stage3(TrainState& state, std::span<const Tracklet> train,
                const TrainConfig& config, const Hooks& hooks) {
  run_until(state, train, config, hooks, config.total_epochs());
}

void run_all(TrainState& state, std::span<const Tracklet> train,
             const TrainConfig& config, const Hooks& hooks) {
  run_stage1(state, train, config, hooks);
  run_stage2(state, train, config, hooks);
  run_stage3(state, train, config, hooks);
}

void save_checkpoint(const std::string& path, const TrainState& state,
                     const nlohmann::json& header) {
  nlohmann::json h = header;
  h["epoch"] = state.epoch;
  h["stage"] = state.stage;
  io::ByteWriter w;
  w.bytes(serialize_encoder(state.params, h));
  w.bytes(std::string_view(kAdamMagic, 4));
  w.u64(state.adam.step);
  w.u64(state.adam.m.size());
  for (double x : state.adam.m) w.f64(x);
  for (double x : state.adam.v) w.f64(x);
  io::write_file(path, w.data());
}

TrainState load_checkpoint(const std::string& path, nlohmann::json* header) {
  const std::string raw = io::read_file(path);
  nlohmann::json h;
  size_t used = 0;
  TrainState s;
  s.params = parse_encoder(raw, path, &h, &used);
  if (!h.contains("epoch") || !h["epoch"].is_number_integer() ||
      h["epoch"].get<int>() < 0) {
    throw Error(ErrorCode::kCorruptFile, path + ": header lacks epoch");
  }
  s.epoch = h["epoch"].get<int>();
  s.stage = h.value("stage", 1);
  io::ByteReader r(std::string_view(raw).substr(used));
  if (r.remaining() < 4 || r.bytes(4) != std::string_view(kAdamMagic, 4)) {
    throw Error(ErrorCode::kCorruptFile, path + ": missing optimizer state");
  }
  s.adam.step = r.u64();
  const uint64_t n = r.u64();
  if ((n != 0 && n != s.params.size()) || r.remaining() != n * 16) {
    throw Error(ErrorCode::kCorruptFile, path + ": bad optimizer state size");
  }
  s.adam.m.resize(n);
  s.adam.v.resize(n);
  for (double& x : s.adam.m) x = r.f64();
  for (double& x : s.adam.v) x = r.f64();
  if (!all_finite(s.adam.m) || !all_finite(s.adam.v)) {
    throw Error(ErrorCode::kCorruptFile, path + ": non-finite optimizer state");
  }
  if (header) *header = std::move(h);
  return s;
}

}  // namespace cba::train

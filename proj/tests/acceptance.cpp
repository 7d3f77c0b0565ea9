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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cba/assignment.hpp"
#include "cba/ciw.hpp"
#include "cba/cluster.hpp"
#include "cba/encoder.hpp"
#include "cba/eval.hpp"
#include "cba/experiment.hpp"
#include "cba/pgur.hpp"
#include "cba/trainer.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"
#include "test_util.hpp"

#ifndef CBA_CLI_PATH
#error "CBA_CLI_PATH must name the cba executable"
#endif

namespace {

using namespace cba;
using testing::concat;
using testing::numeric_gradient;
using testing::random_tracklet;
using testing::random_unit;
using testing::random_vec;
using testing::relative_error;
using testing::split;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---- 1: style transfer statistics

Outcome mpb_exactness() {
  Rng rng(1001);
  const FrameShape shape{3, 4, 4};
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_vec(rng, shape.size(), rng.uniform(0.1, 3));
    Vec r = random_vec(rng, shape.size(), rng.uniform(0.1, 3));
    for (double& v : r) v += rng.uniform(-5, 5);
    const auto out = ciw::mpb_transfer(x, r, shape);
    const auto so = ciw::channel_stats(out.frame, shape);
    const auto sr = ciw::channel_stats(r, shape);
    for (size_t c = 0; c < shape.channels; ++c) {
      worst = std::max({worst, std::abs(so.mean[c] - sr.mean[c]),
                        std::abs(so.stddev[c] - sr.stddev[c])});
    }
  }
  return {worst <= 1e-6, fmt("max stat error %.2e over 100 frames", worst)};
}

// ---- 2: gradient suite

constexpr int kInstances = 20;
constexpr double kGradTol = 1e-4;

struct GradFamily {
  const char* name;
  std::function<double(Rng&)> instance;  // returns relative error
};

pgur::RefinedBanks toy_refined(Rng& rng, size_t K, size_t n_amb, size_t d) {
  pgur::RefinedBanks b;
  const size_t n_rel = K - n_amb;
  b.ir_candidates.assign(n_rel + 1, {});
  for (size_t k = 0; k < K; ++k) {
    b.vis.push_back(random_unit(rng, d));
    b.ir.push_back(random_unit(rng, d));
    const int j = static_cast<int>(std::min(k, n_rel));
    b.origin.push_back({static_cast<int>(k), j, k < n_rel, {}});
    b.vis_to_refined.push_back(static_cast<int>(k));
    b.vis_to_ir.push_back(j);
    b.ir_candidates[j].push_back(static_cast<int>(k));
  }
  return b;
}

double grad_encoder(Rng& rng) {
  const FrameShape shape{2, 3, 2};
  const size_t dim = 3 + rng.uniform_index(3), T = 1 + rng.uniform_index(4);
  const EncoderParams p = EncoderParams::random(dim, shape.size(), rng);
  const Tracklet tr = random_tracklet(rng, T, shape);
  FeatureGrad g;
  g.f = random_vec(rng, dim);
  for (size_t t = 0; t < T; ++t) g.frames.push_back(random_vec(rng, dim));
  auto obj = [&](const Vec& flat) {
    const SeqFeature s = encode(testing::unflatten(flat, dim, shape.size()), tr);
    double v = dot(g.f, s.f);
    for (size_t t = 0; t < T; ++t) v += dot(g.frames[t], s.frame_feats[t]);
    return v;
  };
  return relative_error(testing::flatten(backprop(p, tr, g)),
                        numeric_gradient(obj, testing::flatten(p)));
}

double grad_nce(Rng& rng) {
  const size_t B = 2 + rng.uniform_index(5), d = 4;
  const double tau = rng.uniform(0.3, 1.0);
  std::vector<Vec> o, c;
  for (size_t i = 0; i < B; ++i) {
    o.push_back(random_unit(rng, d));
    c.push_back(random_unit(rng, d));
  }
  const auto r = ciw::bidirectional_nce(o, c, tau);
  auto f_o = [&](const Vec& v) {
    return ciw::bidirectional_nce(split(v, B, d), c, tau).loss;
  };
  auto f_c = [&](const Vec& v) {
    return ciw::bidirectional_nce(o, split(v, B, d), tau).loss;
  };
  return std::max(
      relative_error(concat(r.grad_originals), numeric_gradient(f_o, concat(o))),
      relative_error(concat(r.grad_counterfactuals),
                     numeric_gradient(f_c, concat(c))));
}

double grad_wrt(Rng& rng) {
  const size_t n = 3 + rng.uniform_index(3), T = 2 + rng.uniform_index(3), d = 4;
  std::vector<Vec> pool;
  for (size_t i = 0; i < n * T; ++i) pool.push_back(random_unit(rng, d));
  const auto groups = ciw::build_ics_groups(n, T, rng);
  const auto r = ciw::ics_wrt_loss(pool, groups);
  auto f = [&](const Vec& v) {
    return ciw::ics_wrt_loss(split(v, pool.size(), d), groups).loss;
  };
  return relative_error(concat(r.grads), numeric_gradient(f, concat(pool)));
}

double grad_intra(Rng& rng) {
  const size_t K = 2 + rng.uniform_index(4), n = 5, d = 4;
  const double tau = rng.uniform(0.1, 1.0);
  cluster::PrototypeBank bank;
  for (size_t k = 0; k < K; ++k) bank.prototypes.push_back(random_unit(rng, d));
  std::vector<Vec> f;
  std::vector<int> labels;
  for (size_t i = 0; i < n; ++i) {
    f.push_back(random_unit(rng, d));
    labels.push_back(i == 0 ? cluster::kNoise
                            : static_cast<int>(rng.uniform_index(K)));
  }
  const auto r = cluster::intra_loss(f, labels, bank, tau);
  auto obj = [&](const Vec& v) {
    return cluster::intra_loss(split(v, n, d), labels, bank, tau).loss;
  };
  return relative_error(concat(r.grads), numeric_gradient(obj, concat(f)));
}

double grad_pgur(Rng& rng) {
  const size_t K = 4 + rng.uniform_index(3), d = 5;
  const auto banks = toy_refined(rng, K, 2, d);
  const int k_ir = static_cast<int>(banks.ir_candidates.size());
  std::vector<Vec> fi, fv;
  std::vector<std::optional<pgur::SampleTarget>> ti, tv;
  for (int i = 0; i < 6; ++i) {
    fi.push_back(random_unit(rng, d));
    fv.push_back(random_unit(rng, d));
    ti.push_back(pgur::resolve_target(
        fi.back(), Modality::kInfrared,
        static_cast<int>(rng.uniform_index(k_ir)), banks));
    tv.push_back(pgur::resolve_target(
        fv.back(), Modality::kVisible, static_cast<int>(rng.uniform_index(K)),
        banks));
  }
  pgur::PgurConfig cfg;
  cfg.tau = rng.uniform(0.2, 1.0);
  const auto r = pgur::pgur_loss_with_targets(fi, ti, fv, tv, banks, cfg);
  auto f_ir = [&](const Vec& v) {
    return pgur::pgur_loss_with_targets(split(v, 6, d), ti, fv, tv, banks, cfg)
        .loss;
  };
  auto f_vis = [&](const Vec& v) {
    return pgur::pgur_loss_with_targets(fi, ti, split(v, 6, d), tv, banks, cfg)
        .loss;
  };
  return std::max(
      relative_error(concat(r.grads_ir), numeric_gradient(f_ir, concat(fi))),
      relative_error(concat(r.grads_vis), numeric_gradient(f_vis, concat(fv))));
}

double grad_batch(Rng& rng) {
  const FrameShape shape{2, 3, 2};
  const size_t T = 4, dim = 4;
  std::vector<Tracklet> data;
  for (int m = 0; m < 2; ++m) {
    for (int i = 0; i < 4; ++i) {
      data.push_back(random_tracklet(rng, T, shape, static_cast<Modality>(m)));
    }
  }
  train::TrainConfig cfg;
  cfg.tau = 0.5;
  const EncoderParams p = EncoderParams::random(dim, shape.size(), rng);
  cluster::PrototypeBank banks[2];
  for (auto& b : banks) {
    for (int k = 0; k < 2; ++k) b.prototypes.push_back(random_unit(rng, dim));
  }
  pgur::RefinedBanks refined;
  for (int k = 0; k < 2; ++k) {
    refined.vis.push_back(banks[0].prototypes[k]);
    refined.ir.push_back(banks[1].prototypes[k]);
    refined.origin.push_back({k, k, true, {}});
    refined.vis_to_refined.push_back(k);
    refined.vis_to_ir.push_back(k);
    refined.ir_candidates.push_back({k});
  }
  train::Batch batch;
  for (int m = 0; m < 2; ++m) {
    for (int i = 0; i < 4; ++i) {
      batch.tracklets[m].push_back(&data[m * 4 + i]);
      batch.labels[m].push_back(i == 3 ? cluster::kNoise : i % 2);
    }
  }
  train::BatchContext ctx;
  ctx.ciw = true;
  ctx.bank[0] = &banks[0];
  ctx.bank[1] = &banks[1];
  ctx.refined = &refined;
  const Rng view_rng(rng.uniform_index(1u << 30));
  const auto r = train::batch_loss(p, batch, ctx, cfg, view_rng);
  auto obj = [&](const Vec& flat) {
    return train::batch_loss(testing::unflatten(flat, dim, shape.size()), batch,
                             ctx, cfg, view_rng)
        .total;
  };
  return relative_error(testing::flatten(r.grads),
                        numeric_gradient(obj, testing::flatten(p)));
}

Outcome gradient_suite() {
  const std::vector<GradFamily> families = {
      {"encoder", grad_encoder}, {"nce", grad_nce},   {"wrt", grad_wrt},
      {"intra", grad_intra},     {"pgur", grad_pgur}, {"batch", grad_batch}};
  Rng rng(1002);
  bool ok = true;
  std::string detail;
  for (const auto& f : families) {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) worst = std::max(worst, f.instance(rng));
    ok = ok && worst <= kGradTol;
    detail += std::string(f.name) + fmt(" %.1e ", worst);
  }
  return {ok, "max rel err: " + detail};
}

// ---- 3: assignment optimality

Outcome assignment_optimality() {
  Rng rng(1003);
  int exact = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t kv = 1 + rng.uniform_index(7), ki = 1 + rng.uniform_index(7);
    CostMatrix c(kv, ki);
    for (double& v : c.values) v = rng.uniform(0, 2);
    const auto a = pgur::match_round(c, {});
    exact += a.cost == oracle::min_matching_cost(c, {});
  }
  return {exact == 200, fmt("%.0f/200 trials equal brute force", exact)};
}

// ---- 4: DBSCAN

Outcome dbscan_oracle() {
  Rng rng(1004);
  int same = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng.uniform_index(40), d = 3;
    std::vector<Vec> centres;
    for (int k = 0; k < 4; ++k) centres.push_back(random_unit(rng, d));
    std::vector<Vec> x;
    for (size_t i = 0; i < n; ++i) {
      Vec v = centres[rng.uniform_index(centres.size())];
      axpy(1.0, random_vec(rng, d, rng.uniform(0.05, 0.6)), v);
      x.push_back(v);
    }
    const double eps = rng.uniform(0.02, 0.5);
    const int min_pts = 1 + static_cast<int>(rng.uniform_index(4));
    same += cluster::dbscan(x, eps, min_pts).labels ==
            oracle::dbscan(x, eps, min_pts);
  }
  return {same == 100, fmt("%.0f/100 partitions match the closure", same)};
}

// ---- 5: refinement invariants

Outcome pgur_invariants() {
  Rng rng(1005);
  int bad_size = 0, bad_partition = 0, bad_mean = 0, bad_soft = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int ki = 1 + static_cast<int>(rng.uniform_index(5));
    const int kv = ki + static_cast<int>(rng.uniform_index(ki + 2));
    const auto s = testing::make_scenario(rng, kv, ki);
    const auto r = pgur::progressive_match(s.bank_vis, s.bank_ir);
    const auto b =
        pgur::reconstruct(s.features_ir, s.labels_ir, s.bank_vis, s.bank_ir, r);

    bad_size += b.vis.size() != b.ir.size();

    std::map<int, int> seen;
    bool part = true;
    for (auto [j, i] : r.reliable) {
      ++seen[j];
      part = part && r.candidates[j] == std::vector<int>{i};
    }
    for (const auto& g : r.ambiguous) {
      ++seen[g.ir];
      part = part && g.vis.size() >= 2 && r.candidates[g.ir] == g.vis;
    }
    for (int j = 0; j < ki; ++j) {
      part = part && seen[j] == (r.candidates[j].empty() ? 0 : 1);
    }
    bad_partition += !part;

    for (size_t k = 0; k < b.k(); ++k) {
      Vec mean(b.ir[k].size(), 0.0);
      for (size_t n : b.origin[k].members) axpy(1.0, s.features_ir[n], mean);
      const Vec m = normalized(mean);
      for (size_t d = 0; d < m.size(); ++d) {
        if (std::abs(b.ir[k][d] - m[d]) > 1e-6) {
          ++bad_mean;
          break;
        }
      }
    }

    for (const auto& c : b.ir_candidates) {
      if (c.size() < 2) continue;
      const auto t = pgur::soft_targets(random_unit(rng, b.ir[0].size()), c, b);
      double a = 0, d = 0;
      for (double v : t.i2v) a += v;
      for (double v : t.i2i) d += v;
      bad_soft += std::abs(a - 1.0) > 1e-9 || std::abs(d - 1.0) > 1e-9;
    }
  }
  const bool ok = bad_size + bad_partition + bad_mean + bad_soft == 0;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "violations over 50 scenarios: size %d partition %d mean %d "
                "soft %d",
                bad_size, bad_partition, bad_mean, bad_soft);
  return {ok, buf};
}

// ---- 6 to 8: end-to-end runs

struct SeedRuns {
  std::map<Variant, ExperimentResult> by_variant;
};

std::vector<SeedRuns>& seed_runs() {
  static std::vector<SeedRuns> runs = [] {
    std::vector<SeedRuns> out;
    const Variant needed[] = {Variant::kBaseline, Variant::kBaselineCiw,
                              Variant::kFull, Variant::kMpbV2iOnly,
                              Variant::kMpbI2vOnly};
    for (int seed = 0; seed < 5; ++seed) {
      const ExperimentConfig base = parse_experiment_config({{"seed", seed}});
      const auto split = make_split(synth::generate(base.gen),
                                    base.train_fraction, base.seed);
      SeedRuns sr;
      for (Variant v : needed) {
        ExperimentConfig c = base;
        c.train = apply_variant(base.train, v);
        sr.by_variant.emplace(v, run_experiment(c, split));
      }
      out.push_back(std::move(sr));
    }
    return out;
  }();
  return runs;
}

double r1(const ExperimentResult& r) { return r.eval.i2v.rank_k.at(1); }
double map_i2v(const ExperimentResult& r) { return r.eval.i2v.map_score; }

Outcome end_to_end() {
  int ok = 0;
  std::string detail;
  for (const auto& s : seed_runs()) {
    const auto& b = s.by_variant.at(Variant::kBaseline);
    const auto& bc = s.by_variant.at(Variant::kBaselineCiw);
    const auto& full = s.by_variant.at(Variant::kFull);
    const bool pass = r1(full) - r1(b) >= 0.15 &&
                      map_i2v(full) >= map_i2v(bc) &&
                      map_i2v(bc) >= map_i2v(b);
    ok += pass;
    detail += fmt("[R1 %.3f->%.3f mAP ", r1(b), r1(full)) +
              fmt("%.4f/%.4f/%.4f] ", map_i2v(b), map_i2v(bc), map_i2v(full));
  }
  return {ok >= 4, fmt("%.0f/5 seeds ", ok) + detail};
}

Outcome granularity() {
  int ok = 0;
  std::string detail;
  for (const auto& s : seed_runs()) {
    const auto& full = s.by_variant.at(Variant::kFull);
    const train::EpochMetrics* first = nullptr;
    for (const auto& m : full.history) {
      if (m.stage == 3) {
        first = &m;
        break;
      }
    }
    if (!first || first->k_ir <= 0 || first->k_refined < 0) {
      detail += "[no stage-3 clustering] ";
      continue;
    }
    const double ratio = static_cast<double>(first->k_vis) / first->k_ir;
    const bool pass =
        ratio >= 1.2 && std::abs(first->k_refined - full.n_train_ids) <= 2;
    ok += pass;
    detail += fmt("[%.0f/%.0f K~%.0f] ", first->k_vis, first->k_ir,
                  first->k_refined);
  }
  return {ok >= 4, fmt("%.0f/5 seeds, true ids 12, ", ok) + detail};
}

Outcome bidirectional_mpb() {
  int ok = 0;
  std::string detail;
  for (const auto& s : seed_runs()) {
    const double both = map_i2v(s.by_variant.at(Variant::kFull));
    const double v2i = map_i2v(s.by_variant.at(Variant::kMpbV2iOnly));
    const double i2v = map_i2v(s.by_variant.at(Variant::kMpbI2vOnly));
    ok += both >= v2i && both >= i2v;
    detail += fmt("[%.4f vs %.4f/%.4f] ", both, v2i, i2v);
  }
  return {ok >= 4, fmt("%.0f/5 seeds ", ok) + detail};
}

// ---- 9: mAP oracle

Outcome map_correctness() {
  Rng rng(1009);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int nq = 1 + static_cast<int>(rng.uniform_index(10));
    const int ng = 1 + static_cast<int>(rng.uniform_index(30));
    const int n_ids = 1 + static_cast<int>(rng.uniform_index(6));
    std::vector<Vec> q, g;
    std::vector<int> qid, gid;
    for (int i = 0; i < ng; ++i) {
      g.push_back({std::round(rng.uniform(-2, 2)), std::round(rng.uniform(-2, 2)), 1.0});
      gid.push_back(i < n_ids ? i : static_cast<int>(rng.uniform_index(n_ids)));
    }
    const int present = std::min(n_ids, ng);
    for (int i = 0; i < nq; ++i) {
      q.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), 1.0});
      qid.push_back(static_cast<int>(rng.uniform_index(present)));
    }
    const auto r = eval::evaluate(q, g, qid, gid);
    double m = 0.0;
    for (int i = 0; i < nq; ++i) {
      Vec scores;
      std::vector<bool> rel;
      for (int k = 0; k < ng; ++k) {
        scores.push_back(cosine_sim(q[i], g[k]));
        rel.push_back(gid[k] == qid[i]);
      }
      m += oracle::average_precision(scores, rel);
    }
    worst = std::max(worst, std::abs(r.map_score - m / nq));
  }
  return {worst <= 1e-9, fmt("max |mAP - oracle| %.2e over 50 instances", worst)};
}

// ---- 10: determinism

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "cba_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);
  std::string ckpt[2], metrics[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = root / ("run" + std::to_string(run));
    const fs::path cfg = root / ("config" + std::to_string(run) + ".json");
    std::ofstream(cfg) << nlohmann::json{{"seed", 11},
                                         {"output_dir", out.string()}}
                              .dump();
    const std::string cmd = std::string(CBA_CLI_PATH) + " train --config " +
                            cfg.string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      return {false, "training run " + std::to_string(run) + " failed"};
    }
    ckpt[run] = slurp(out / "checkpoint.cba");
    metrics[run] = slurp(out / "metrics.jsonl");
  }
  const std::hash<std::string> h;
  const bool ok = !ckpt[0].empty() && !metrics[0].empty() &&
                  ckpt[0] == ckpt[1] && metrics[0] == metrics[1];
  char buf[160];
  std::snprintf(buf, sizeof buf, "checkpoint %016zx/%016zx metrics %016zx/%016zx",
                h(ckpt[0]), h(ckpt[1]), h(metrics[0]), h(metrics[1]));
  fs::remove_all(root);
  return {ok, buf};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
  double budget_s;  // 0 means no runtime bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "MPB exactness", mpb_exactness, 1.0},
      {2, "gradient suite", gradient_suite, 30.0},
      {3, "assignment optimality", assignment_optimality, 0.0},
      {4, "DBSCAN oracle", dbscan_oracle, 0.0},
      {5, "PGUR structural invariants", pgur_invariants, 0.0},
      {6, "end-to-end recovery", end_to_end, 600.0},
      {7, "granularity correction", granularity, 0.0},
      {8, "bidirectional MPB", bidirectional_mpb, 0.0},
      {9, "mAP correctness", map_correctness, 0.0},
      {10, "determinism", determinism, 0.0},
  };
  // Drop counts are in the metrics; training notes are discarded.
  std::clog.rdbuf(nullptr);
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" (over the %.0f s budget)", c.budget_s);
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %-28s %7.2fs  %s\n", c.id,
                o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n",
              static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

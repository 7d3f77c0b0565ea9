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

#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "cba/experiment.hpp"
#include "cba/trainer.hpp"

namespace cba {
namespace {

using train::TrainConfig;
using train::TrainState;

struct Tiny {
  ExperimentConfig config;
  synth::DataSplit split;
};

// A small problem that trains in well under a second.
Tiny tiny(int s1, int s2, int s3, uint64_t seed = 0) {
  Tiny t;
  t.config.seed = t.config.gen.seed = t.config.train.seed = seed;
  t.config.gen.n_ids = 8;
  t.config.gen.tracklets_per_id = 2;
  t.config.train.stage1_epochs = s1;
  t.config.train.stage2_epochs = s2;
  t.config.train.stage3_epochs = s3;
  t.config.train.dim = 8;
  t.config.train.batch_per_modality = 4;
  t.split = make_split(synth::generate(t.config.gen), 0.5, seed);
  return t;
}

TrainState fresh(const Tiny& t) {
  return train::init_state(t.config.train, t.split.train.front().shape.size());
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cba_test_" + name)).string();
}

TEST_CASE("zero epochs leave the state untouched") {
  const Tiny t = tiny(0, 0, 0);
  TrainState s = fresh(t);
  const EncoderParams before = s.params;
  train::run_all(s, t.split.train, t.config.train);
  CHECK(s.params == before);
  CHECK(s.epoch == 0);
  CHECK(s.history.empty());
}

TEST_CASE("training is bitwise reproducible") {
  const Tiny t = tiny(1, 1, 0);
  TrainState a = fresh(t), b = fresh(t);
  train::run_all(a, t.split.train, t.config.train);
  train::run_all(b, t.split.train, t.config.train);
  CHECK(a.params == b.params);
  REQUIRE(a.history.size() == 2);
  for (size_t e = 0; e < 2; ++e) {
    CHECK(a.history[e].l_total == b.history[e].l_total);
    CHECK(a.history[e].to_json() == b.history[e].to_json());
  }
}

TEST_CASE("intervention loss falls over ten warm-up epochs") {
  ExperimentConfig c;
  c.train.stage1_epochs = 10;
  c.train.stage2_epochs = 0;
  c.train.stage3_epochs = 0;
  const auto split = make_split(synth::generate(c.gen), c.train_fraction, 0);
  TrainState s = train::init_state(c.train, split.train.front().shape.size());
  train::run_all(s, split.train, c.train);
  REQUIRE(s.history.size() == 10);
  CHECK(s.history.back().l_ciw < s.history.front().l_ciw);
}

TEST_CASE("reported total equals the sum of its parts") {
  const Tiny t = tiny(2, 2, 3);
  TrainState s = fresh(t);
  train::run_all(s, t.split.train, t.config.train);
  for (const auto& m : s.history) {
    CHECK(std::abs(m.l_total - (m.l_intra + m.l_ciw + m.l_pgur)) <= 1e-9);
  }
}

TEST_CASE("stages gate their loss terms") {
  const Tiny t = tiny(2, 2, 2);
  TrainState s = fresh(t);
  train::run_all(s, t.split.train, t.config.train);
  for (const auto& m : s.history) {
    if (m.stage == 1) {
      CHECK(m.l_intra == 0.0);
      CHECK(m.l_pgur == 0.0);
      CHECK(m.l_ciw > 0.0);
      CHECK(m.k_vis == -1);
    } else if (m.stage == 2) {
      CHECK(m.l_ciw == 0.0);
      CHECK(m.l_pgur == 0.0);
      CHECK(m.k_vis >= 0);
    } else {
      CHECK(m.l_ciw > 0.0);
    }
  }
}

TEST_CASE("cosine warm-up schedule") {
  TrainConfig c;
  c.stage1_epochs = 4;
  c.stage2_epochs = 2;
  c.lr = 1.0;
  c.lr_late_factor = 0.01;
  CHECK(c.lr_at(0) == doctest::Approx(1.0));
  CHECK(c.lr_at(2) == doctest::Approx(0.5));
  CHECK(c.lr_at(4) == doctest::Approx(0.01));
  CHECK(c.lr_at(9) == doctest::Approx(0.01));
  CHECK(c.stage_of(3) == 1);
  CHECK(c.stage_of(4) == 2);
  CHECK(c.stage_of(6) == 3);
}

TEST_CASE("one cluster per modality makes the intra term vanish") {
  Tiny t = tiny(0, 1, 0);
  t.config.train.clustering.eps = 2.0;
  TrainState s = fresh(t);
  const EncoderParams before = s.params;
  train::run_all(s, t.split.train, t.config.train);
  REQUIRE(s.history.size() == 1);
  CHECK(s.history[0].k_vis == 1);
  CHECK(s.history[0].k_ir == 1);
  CHECK(s.history[0].l_intra == doctest::Approx(0.0));
  CHECK(s.params == before);
}

TEST_CASE("no refinement without a third stage") {
  const Tiny t = tiny(1, 2, 0);
  TrainState s = fresh(t);
  int dumps = 0;
  train::Hooks h;
  h.on_association = [&](int, const nlohmann::json&) { ++dumps; };
  train::run_all(s, t.split.train, t.config.train, h);
  CHECK(dumps == 0);
  CHECK_FALSE(s.refined.has_value());
  for (const auto& m : s.history) CHECK(m.k_refined == -1);
}

TEST_CASE("third stage dumps one association per epoch") {
  const Tiny t = tiny(1, 1, 2);
  TrainState s = fresh(t);
  std::vector<int> epochs;
  train::Hooks h;
  h.on_association = [&](int e, const nlohmann::json& j) {
    epochs.push_back(e);
    CHECK(j.is_object());
  };
  train::run_all(s, t.split.train, t.config.train, h);
  CHECK(epochs == std::vector<int>{2, 3});
}

TEST_CASE("checkpoint resume matches uninterrupted training") {
  const Tiny t = tiny(2, 2, 2);
  TrainState whole = fresh(t);
  train::run_all(whole, t.split.train, t.config.train);

  for (int cut : {1, 3, 5}) {
    TrainState probe = fresh(t);
    const std::string path = temp_path("resume.cba");
    train::Hooks h;
    h.on_epoch = [&](const train::EpochMetrics&, const TrainState& st) {
      if (st.epoch == cut) train::save_checkpoint(path, st, {{"seed", 0}});
    };
    train::run_all(probe, t.split.train, t.config.train, h);
    TrainState resumed = train::load_checkpoint(path);
    CHECK(resumed.epoch == cut);
    train::run_all(resumed, t.split.train, t.config.train);
    CHECK(resumed.params == whole.params);
    CHECK(resumed.adam.m == whole.adam.m);
    CHECK(resumed.adam.v == whole.adam.v);
    REQUIRE(!resumed.history.empty());
    CHECK(resumed.history.back().l_total == whole.history.back().l_total);
    std::filesystem::remove(path);
  }
}

TEST_CASE("optimizer blow-up is reported as divergence") {
  Tiny t = tiny(2, 0, 0);
  t.config.train.lr = 1e300;
  TrainState s = fresh(t);
  try {
    train::run_all(s, t.split.train, t.config.train);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumericalDivergence);
  }
  CHECK(all_finite(s.params.weight));
}

TEST_CASE("invalid train settings name the field") {
  TrainConfig c;
  c.batch_per_modality = 1;
  try {
    c.validate(6);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfigError);
    CHECK(std::string(e.what()).find("batch_per_modality") != std::string::npos);
  }
}

TEST_CASE("confounder-free data recovers the identity count") {
  ExperimentConfig c;
  c.gen.style_gap = 0.0;
  c.gen.granularity_skew = 0.0;
  c.gen.motion_strength = 0.0;
  const auto split = make_split(synth::generate(c.gen), c.train_fraction, 0);
  const auto r = run_experiment(c, split);
  const auto& last = r.history.back();
  CHECK(last.stage == 3);
  CHECK(last.k_vis == r.n_train_ids);
  CHECK(last.k_ir == r.n_train_ids);
}

TEST_CASE("default run on the easy profile retrieves across modalities") {
  ExperimentConfig c;
  c.gen.granularity_skew = 0.0;
  const auto split = make_split(synth::generate(c.gen), c.train_fraction, 0);
  const auto r = run_experiment(c, split);
  CHECK(r.eval.i2v.rank_k.at(1) >= 0.9);
}

TEST_CASE("experiment config parsing") {
  const auto c = parse_experiment_config(
      {{"seed", 7}, {"style_gap", 2.5}, {"use_pgur", false}, {"mpb_direction", "v2i"}});
  CHECK(c.seed == 7);
  CHECK(c.gen.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.gen.style_gap == 2.5);
  CHECK_FALSE(c.train.use_pgur);
  CHECK(c.train.intervention.visible_to_infrared);
  CHECK_FALSE(c.train.intervention.infrared_to_visible);
  const auto back = parse_experiment_config(to_json(c));
  CHECK(to_json(back) == to_json(c));

  auto expect_field = [](const nlohmann::json& j, const std::string& field) {
    try {
      parse_experiment_config(j);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfigError);
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  expect_field({{"n_ids", 4}}, "seed");
  expect_field({{"seed", 1}, {"nonsense", 1}}, "nonsense");
  expect_field({{"seed", 1}, {"lr", "fast"}}, "lr");
  expect_field({{"seed", 1}, {"train_fraction", 1.0}}, "train_fraction");
  expect_field({{"seed", 1}, {"mpb_direction", "sideways"}}, "mpb_direction");
  expect_field({{"seed", -1}}, "seed");
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
  nlohmann::json doc = {{"seed", 1}};
  apply_override(doc, "lr", "0.5");
  apply_override(doc, "use_pgur", "false");
  apply_override(doc, "dataset", "data/x.xma");
  CHECK(doc["lr"] == 0.5);
  CHECK(doc["use_pgur"] == false);
  CHECK(doc["dataset"] == "data/x.xma");
}

TEST_CASE("variants toggle the intended switches") {
  const TrainConfig base;
  const auto b = apply_variant(base, Variant::kBaseline);
  CHECK_FALSE(b.ciw_enabled());
  CHECK_FALSE(b.use_pgur);
  const auto bc = apply_variant(base, Variant::kBaselineCiw);
  CHECK(bc.ciw_enabled());
  CHECK_FALSE(bc.use_pgur);
  const auto v2i = apply_variant(base, Variant::kMpbV2iOnly);
  CHECK(v2i.intervention.visible_to_infrared);
  CHECK_FALSE(v2i.intervention.infrared_to_visible);
  CHECK(all_variants().size() == 10);
}

}  // namespace
}  // namespace cba

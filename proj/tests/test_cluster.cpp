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

#include "doctest.h"

#include "cba/cluster.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cba {
namespace {

using testing::random_unit;
using testing::random_vec;

// Points scattered around a few random centres so that every kind of
// DBSCAN outcome (core, border, noise) shows up.
std::vector<Vec> clumpy_points(Rng& rng, size_t n, size_t d) {
  std::vector<Vec> centres;
  for (int k = 0; k < 4; ++k) centres.push_back(random_unit(rng, d));
  std::vector<Vec> out;
  for (size_t i = 0; i < n; ++i) {
    Vec v = centres[rng.uniform_index(centres.size())];
    axpy(1.0, random_vec(rng, d, rng.uniform(0.05, 0.6)), v);
    out.push_back(v);
  }
  return out;
}

TEST_CASE("two orthogonal groups form two clusters") {
  Rng rng(41);
  std::vector<Vec> x;
  for (int i = 0; i < 5; ++i) {
    x.push_back(normalized(Vec{1, 0.01 * rng.normal(), 0.01 * rng.normal()}));
  }
  for (int i = 0; i < 5; ++i) {
    x.push_back(normalized(Vec{0.01 * rng.normal(), 1, 0.01 * rng.normal()}));
  }
  const auto pl = cluster::dbscan(x, 0.1, 3);
  CHECK(pl.k == 2);
  for (int i = 0; i < 5; ++i) {
    CHECK(pl.labels[i] == 0);
    CHECK(pl.labels[5 + i] == 1);
  }
}

TEST_CASE("isolated point is noise") {
  const std::vector<Vec> x = {{1, 0, 0}, {0.999, 0.04, 0}, {0.998, 0, 0.06},
                              {0, 0, 1}};
  const auto pl = cluster::dbscan(x, 0.05, 2);
  CHECK(pl.labels[3] == cluster::kNoise);
  CHECK(pl.k == 1);
}

TEST_CASE("eps of two joins everything") {
  Rng rng(42);
  std::vector<Vec> x;
  for (int i = 0; i < 20; ++i) x.push_back(random_unit(rng, 4));
  const auto pl = cluster::dbscan(x, 2.0, 2);
  CHECK(pl.k == 1);
  for (int l : pl.labels) CHECK(l == 0);
}

TEST_CASE("DBSCAN matches the closure oracle") {
  Rng rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t n = 1 + rng.uniform_index(30);
    const auto x = clumpy_points(rng, n, 3);
    const double eps = rng.uniform(0.02, 0.5);
    const int min_pts = 1 + static_cast<int>(rng.uniform_index(4));
    const auto pl = cluster::dbscan(x, eps, min_pts);
    CHECK(pl.labels == oracle::dbscan(x, eps, min_pts));
  }
}

TEST_CASE("re-clustering is idempotent") {
  Rng rng(44);
  const auto x = clumpy_points(rng, 30, 4);
  CHECK(cluster::dbscan(x, 0.2, 2).labels == cluster::dbscan(x, 0.2, 2).labels);
}

TEST_CASE("prototype is the normalized centroid") {
  const std::vector<Vec> x = {{1, 0}, {0, 1}, {0.6, 0.8}};
  const std::vector<int> labels = {0, 0, 1};
  const auto bank = cluster::build_bank(x, labels, Modality::kVisible, 0.2);
  REQUIRE(bank.k() == 2);
  CHECK(bank.prototypes[0][0] == doctest::Approx(std::sqrt(0.5)));
  CHECK(bank.prototypes[0][1] == doctest::Approx(std::sqrt(0.5)));
  CHECK(bank.prototypes[1] == x[2]);
}

TEST_CASE("all-noise labels cannot build a bank") {
  const std::vector<Vec> x = {{1, 0}, {0, 1}};
  const std::vector<int> labels = {-1, -1};
  try {
    cluster::build_bank(x, labels, Modality::kInfrared, 0.2);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNoClusters);
  }
}

TEST_CASE("momentum updates keep prototypes on the sphere") {
  Rng rng(45);
  std::vector<Vec> x;
  std::vector<int> labels;
  for (int i = 0; i < 12; ++i) {
    x.push_back(random_unit(rng, 5));
    labels.push_back(i % 3);
  }
  auto bank = cluster::build_bank(x, labels, Modality::kVisible, 0.2);
  for (int step = 0; step < 30; ++step) {
    std::vector<Vec> f;
    std::vector<int> l;
    for (int i = 0; i < 4; ++i) {
      f.push_back(random_unit(rng, 5));
      l.push_back(static_cast<int>(rng.uniform_index(4)) - 1);
    }
    cluster::apply_momentum(bank, f, l);
    for (const auto& p : bank.prototypes) CHECK(std::abs(l2_norm(p) - 1.0) <= 1e-6);
  }
}

TEST_CASE("intra loss closed form") {
  cluster::PrototypeBank bank;
  bank.prototypes = {{1, 0}, {0, 1}};
  const std::vector<Vec> f = {{1, 0}};
  const std::vector<int> l = {0};
  const auto r = cluster::intra_loss(f, l, bank, 1.0);
  CHECK(r.loss == doctest::Approx(std::log(1 + std::exp(-1.0))));
  CHECK(r.loss == doctest::Approx(0.3133).epsilon(1e-4));

  bank.prototypes = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const std::vector<Vec> g = {normalized(Vec{1, 1, 1})};
  const std::vector<int> lg = {2};
  CHECK(cluster::intra_loss(g, lg, bank, 0.05).loss == doctest::Approx(std::log(3.0)));
}

TEST_CASE("noise samples contribute no loss or gradient") {
  Rng rng(46);
  cluster::PrototypeBank bank;
  bank.prototypes = {random_unit(rng, 4), random_unit(rng, 4)};
  const std::vector<Vec> f = {random_unit(rng, 4), random_unit(rng, 4)};
  const auto with = cluster::intra_loss(f, std::vector<int>{0, -1}, bank, 0.1);
  const auto alone =
      cluster::intra_loss(std::vector<Vec>{f[0]}, std::vector<int>{0}, bank, 0.1);
  CHECK(with.loss == doctest::Approx(alone.loss));
  CHECK(with.used == 1);
  for (double g : with.grads[1]) CHECK(g == 0.0);
}

TEST_CASE("single cluster gives zero intra loss") {
  cluster::PrototypeBank bank;
  bank.prototypes = {{0.6, 0.8}};
  const std::vector<Vec> f = {{1, 0}, {0, 1}};
  const auto r = cluster::intra_loss(f, std::vector<int>{0, 0}, bank, 0.05);
  CHECK(r.loss == doctest::Approx(0.0));
  for (const auto& g : r.grads) {
    for (double v : g) CHECK(v == doctest::Approx(0.0));
  }
}

TEST_CASE("labels outside the bank are rejected") {
  cluster::PrototypeBank bank;
  bank.prototypes = {{1, 0}};
  const std::vector<Vec> f = {{1, 0}};
  CHECK_THROWS_AS(cluster::intra_loss(f, std::vector<int>{1}, bank, 0.05), Error);
}

}  // namespace
}  // namespace cba

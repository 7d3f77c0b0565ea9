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

#include "cba/rng.hpp"

#include <cmath>
#include <numbers>

namespace cba {

namespace {
constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
}  // namespace

// SplitMix64 finalizer.
uint64_t mix64(uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed, uint64_t stream)
    : key_(mix64(mix64(seed) ^ mix64(stream + kGamma))), counter_(0) {}

uint64_t Rng::next_u64() {
  const uint64_t c = counter_++;
  return mix64(key_ + (c + 1) * kGamma) ^ mix64(c ^ key_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

size_t Rng::uniform_index(size_t n) {
  const uint64_t bound = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<size_t>(x % bound);
}

double Rng::normal() {
  // Box-Muller, one variate per call so the counter advances by exactly two.
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::derive(uint64_t stream) const {
  return Rng(mix64(key_ ^ mix64(stream * kGamma + 0x632be59bd9b4e019ULL)), 0,
             0);
}

std::vector<size_t> Rng::sample_without_replacement(size_t n, size_t k) {
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace cba

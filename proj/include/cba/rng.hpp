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

#ifndef CBA_RNG_HPP_
#define CBA_RNG_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace cba {

// Counter-based generator: the i-th output is a pure function of
// (key, i), so streams are reproducible bit-for-bit on every platform and
// independent sub-streams are derived by rekeying instead of by sharing
// state. Distribution transforms are implemented here rather than taken
// from <random>, whose distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n). n must be > 0.
  size_t uniform_index(size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent generator keyed by (this key, stream). Does not advance this.
  Rng derive(uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  // k distinct indices from [0, n), in selection order.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

 private:
  Rng(uint64_t key, uint64_t counter, int /*raw*/)
      : key_(key), counter_(counter) {}

  uint64_t key_;
  uint64_t counter_;
};

uint64_t mix64(uint64_t x);

}  // namespace cba

#endif  // CBA_RNG_HPP_

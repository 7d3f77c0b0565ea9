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

// Helpers shared by the unit tests and the acceptance binary.

#ifndef CBA_TESTS_TEST_UTIL_HPP_
#define CBA_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cba/core.hpp"
#include "cba/encoder.hpp"
#include "cba/rng.hpp"
#include "cba/tracklet.hpp"

namespace cba::testing {

inline Vec random_vec(Rng& rng, size_t n, double sd = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.normal(0.0, sd);
  return v;
}

inline Vec random_unit(Rng& rng, size_t n) {
  return normalized(random_vec(rng, n));
}

inline Tracklet random_tracklet(Rng& rng, size_t T, FrameShape shape,
                                Modality m = Modality::kVisible) {
  Tracklet tr;
  tr.seq_len = T;
  tr.shape = shape;
  tr.modality = m;
  tr.data = random_vec(rng, T * shape.size());
  return tr;
}

// Central differences of f at x with step h.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f,
                            const Vec& x, double h = 1e-4) {
  Vec g(x.size());
  Vec y = x;
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max_i max(|a_i|, |b_i|): the worst component error
// relative to the gradient's overall scale. 0 when both are zero.
inline double relative_error(const Vec& a, const Vec& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max({den, std::abs(a[i]), std::abs(b[i])});
  }
  return den == 0.0 ? num : num / den;
}

inline Vec flatten(const EncoderParams& p) {
  Vec v = p.weight;
  v.insert(v.end(), p.bias.begin(), p.bias.end());
  return v;
}

inline EncoderParams unflatten(const Vec& v, size_t dim, size_t input_dim) {
  EncoderParams p = EncoderParams::zeros(dim, input_dim);
  std::copy(v.begin(), v.begin() + dim * input_dim, p.weight.begin());
  std::copy(v.begin() + dim * input_dim, v.end(), p.bias.begin());
  return p;
}

// Concatenates a list of vectors.
inline Vec concat(const std::vector<Vec>& vs) {
  Vec out;
  for (const auto& v : vs) out.insert(out.end(), v.begin(), v.end());
  return out;
}

inline std::vector<Vec> split(const Vec& flat, size_t n, size_t d) {
  std::vector<Vec> out(n);
  for (size_t i = 0; i < n; ++i) {
    out[i].assign(flat.begin() + i * d, flat.begin() + (i + 1) * d);
  }
  return out;
}

// Normalizes each block of `flat`; used to evaluate losses defined on unit
// features at perturbed, non-unit inputs.
inline std::vector<Vec> split_normalized(const Vec& flat, size_t n, size_t d) {
  auto vs = split(flat, n, d);
  for (auto& v : vs) normalize_in_place(v);
  return vs;
}

}  // namespace cba::testing

#endif  // CBA_TESTS_TEST_UTIL_HPP_

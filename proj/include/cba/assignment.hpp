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

#ifndef CBA_ASSIGNMENT_HPP_
#define CBA_ASSIGNMENT_HPP_

#include <vector>

namespace cba {

// Dense row-major cost matrix.
struct CostMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double operator()(size_t r, size_t c) const { return values[r * cols + c]; }
  double& operator()(size_t r, size_t c) { return values[r * cols + c]; }
};

// Minimum-cost assignment of every left vertex to a distinct right vertex
// (Kuhn-Munkres with potentials, O(n^2 m)). Requires left <= right. Entry
// `cost(l, r)` is the cost of pairing left l with right r; the result maps
// each left index to its right index. Candidates are scanned in ascending
// index with strict comparisons, so among equal-cost alternatives the
// lower right index is taken.
std::vector<int> solve_assignment(const CostMatrix& cost);

}  // namespace cba

#endif  // CBA_ASSIGNMENT_HPP_

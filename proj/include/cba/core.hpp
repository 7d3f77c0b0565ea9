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

#ifndef CBA_CORE_HPP_
#define CBA_CORE_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cba {

enum class ErrorCode {
  kDegenerateVector,
  kBadTemperature,
  kLogOfZero,
  kShapeError,
  kConfigError,
  kSplitTooSmall,
  kNoReference,
  kBatchTooSmall,
  kDegenerateTriplet,
  kNoClusters,
  kLabelMismatch,
  kNotAmbiguous,
  kUnmatchableQuery,
  kNumericalDivergence,
  kIoError,
  kCorruptFile,
};

const char* to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type so
// callers (the CLI in particular) can map the code to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

using Vec = std::vector<double>;

// Clamp applied before every log of a probability.
inline constexpr double kLogEps = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

// Returns a / |a|. Throws kDegenerateVector when |a| == 0 or is not finite.
Vec normalized(std::span<const double> a);
void normalize_in_place(std::span<double> a);

// a += scale * b
void axpy(double scale, std::span<const double> b, std::span<double> a);

double cosine_sim(std::span<const double> a, std::span<const double> b);

// Numerically stable softmax(logits / temperature).
Vec softmax(std::span<const double> logits, double temperature);

// -sum_i target_i * log(pred_i). Zero-target terms are skipped; a zero
// prediction under a nonzero target throws kLogOfZero.
double cross_entropy(std::span<const double> target,
                     std::span<const double> pred);

double log_sum_exp(std::span<const double> values);

bool all_finite(std::span<const double> a);

}  // namespace cba

#endif  // CBA_CORE_HPP_

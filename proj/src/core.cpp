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

#include "cba/core.hpp"

#include <algorithm>
#include <cmath>

namespace cba {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateVector: return "DegenerateVector";
    case ErrorCode::kBadTemperature: return "BadTemperature";
    case ErrorCode::kLogOfZero: return "LogOfZero";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kSplitTooSmall: return "SplitTooSmall";
    case ErrorCode::kNoReference: return "NoReference";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kDegenerateTriplet: return "DegenerateTriplet";
    case ErrorCode::kNoClusters: return "NoClusters";
    case ErrorCode::kLabelMismatch: return "LabelMismatch";
    case ErrorCode::kNotAmbiguous: return "NotAmbiguous";
    case ErrorCode::kUnmatchableQuery: return "UnmatchableQuery";
    case ErrorCode::kNumericalDivergence: return "NumericalDivergence";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kCorruptFile: return "CorruptFile";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code) {}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeError, "dot: size mismatch");
  }
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vec normalized(std::span<const double> a) {
  Vec out(a.begin(), a.end());
  normalize_in_place(out);
  return out;
}

void normalize_in_place(std::span<double> a) {
  const double n = l2_norm(a);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kDegenerateVector, "cannot normalize zero vector");
  }
  for (double& v : a) v /= n;
}

void axpy(double scale, std::span<const double> b, std::span<double> a) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeError, "axpy: size mismatch");
  }
  for (size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kShapeError, "cosine_sim: size mismatch");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw Error(ErrorCode::kDegenerateVector, "cosine_sim: zero-norm input");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -INFINITY;
  const double m = *std::max_element(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error(ErrorCode::kBadTemperature, "temperature must be positive");
  }
  Vec out(logits.size());
  if (logits.empty()) return out;
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - m) / temperature);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

double cross_entropy(std::span<const double> target,
                     std::span<const double> pred) {
  if (target.size() != pred.size()) {
    throw Error(ErrorCode::kShapeError, "cross_entropy: size mismatch");
  }
  double loss = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    if (pred[i] <= 0.0) {
      throw Error(ErrorCode::kLogOfZero,
                  "cross_entropy: zero prediction under nonzero target");
    }
    loss -= target[i] * std::log(std::max(pred[i], kLogEps));
  }
  return loss;
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace cba

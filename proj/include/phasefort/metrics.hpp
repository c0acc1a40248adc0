// Copyright 2026 The PhaseFort Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <numbers>
#include <span>

#include "phasefort/tensor.hpp"

namespace phasefort {

/// Mean absolute pixel difference.
template <typename T>
double reconstruction_error(const Tensor<T>& reconstructed, const Tensor<T>& original) {
  require_same_shape(reconstructed, original, "reconstruction_error");
  if (original.numel() == 0) throw ShapeError("reconstruction_error of empty tensors");
  long double s = 0;
  for (std::size_t i = 0; i < original.numel(); ++i)
    s += std::abs(static_cast<long double>(reconstructed[i]) - original[i]);
  return static_cast<double>(s / static_cast<long double>(original.numel()));
}

/// Distance on the unit circle, in [0, pi].
inline double angle_error(double theta_star, double theta_hat) {
  if (!std::isfinite(theta_star) || !std::isfinite(theta_hat)) throw NumericError("angle_error of a non-finite angle");
  const double two_pi = 2.0 * std::numbers::pi;
  const double d = std::fmod(std::abs(theta_star - theta_hat), two_pi);
  return std::min(d, two_pi - d);
}

/// 100 * (1 - top-1 accuracy); logits are (n, classes).
template <typename T>
double classification_error(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() < 1 || logits.dim(0) != labels.size()) throw ShapeError("classification_error: length mismatch");
  if (labels.empty()) throw ShapeError("classification_error of an empty batch");
  const std::size_t n = labels.size(), c = logits.numel() / n;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.raw() + i * c;
    const auto best = static_cast<int>(std::max_element(row, row + c) - row);
    if (best != labels[i]) ++wrong;
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(n);
}

}  // namespace phasefort

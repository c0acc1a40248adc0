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
#include <span>
#include <vector>

#include "phasefort/kernels.hpp"
#include "phasefort/tensor.hpp"

namespace phasefort {

/// Per-sample phase: either one angle for the whole tensor or one per
/// leading-axis entry.
inline double phase_for(std::span<const double> theta, std::size_t n) {
  return theta.size() == 1 ? theta[0] : theta[n];
}

inline void check_phases(std::span<const double> theta, std::size_t batch) {
  if (theta.size() != 1 && theta.size() != batch) {
    throw ShapeError("phase count " + std::to_string(theta.size()) +
                     " does not match batch " + std::to_string(batch));
  }
  for (double t : theta) {
    if (!std::isfinite(t)) throw NumericError("non-finite rotation angle");
  }
}

/// Multiply each sample by exp(i * theta[n]).
template <typename T>
ComplexTensor<T> rotate(const ComplexTensor<T>& x, std::span<const double> theta) {
  const std::size_t batch = x.shape().empty() ? 1 : x.shape()[0];
  check_phases(theta, batch);
  ComplexTensor<T> out(x.shape());
  const std::size_t per = x.numel() / std::max<std::size_t>(batch, 1);
  for (std::size_t n = 0; n < batch; ++n) {
    const double t = phase_for(theta, n);
    const T c = static_cast<T>(std::cos(t)), s = static_cast<T>(std::sin(t));
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      const T re = x.re[i], im = x.im[i];
      out.re[i] = re * c - im * s;
      out.im[i] = im * c + re * s;
    }
  }
  return out;
}

template <typename T>
ComplexTensor<T> rotate(const ComplexTensor<T>& x, double theta) {
  const double t[1] = {theta};
  return rotate(x, std::span<const double>(t, 1));
}

template <typename T>
Tensor<T> real_part(const ComplexTensor<T>& x) {
  return x.re;
}

template <typename T>
Tensor<T> magnitude(const ComplexTensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::hypot(x.re[i], x.im[i]);
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                 std::size_t pad, const Tensor<T>* bias = nullptr) {
  const auto g = kernels::conv_geometry(x.shape(), w.shape(), stride, pad);
  if (bias && bias->numel() != g.out_channels) throw ShapeError("conv2d bias size");
  Tensor<T> y({x.dim(0), g.out_channels, g.out_h(), g.out_w()});
  kernels::conv_forward(x.raw(), x.dim(0), g, w.raw(), bias ? bias->raw() : nullptr,
                        y.raw());
  return y;
}

/// Real kernel applied to both planes; no bias exists on this path.
template <typename T>
ComplexTensor<T> conv2d(const ComplexTensor<T>& x, const Tensor<T>& w,
                        std::size_t stride, std::size_t pad) {
  return ComplexTensor<T>(conv2d(x.re, w, stride, pad), conv2d(x.im, w, stride, pad));
}

}  // namespace phasefort

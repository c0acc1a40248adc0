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

// Raw-plane kernels shared by the real and complex paths. A complex tensor
// is processed by running the same kernel over its re and im planes.

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <vector>

#include "phasefort/tensor.hpp"

namespace phasefort::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, pad = 0;

  std::size_t out_h() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (width + 2 * pad - kernel_w) / stride + 1; }
  std::size_t patch() const { return channels * kernel_h * kernel_w; }
  std::size_t positions() const { return out_h() * out_w(); }
  bool pointwise() const {
    return kernel_h == 1 && kernel_w == 1 && stride == 1 && pad == 0;
  }
};

inline ConvGeometry conv_geometry(const Shape& input, const Shape& weight,
                                  std::size_t stride, std::size_t pad) {
  if (input.size() != 4 || weight.size() != 4) {
    throw ShapeError("conv2d expects 4-D input and weight, got " +
                     to_string(input) + " and " + to_string(weight));
  }
  if (input[1] != weight[1]) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(input) +
                     " kernel " + to_string(weight));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  ConvGeometry g;
  g.channels = input[1];
  g.height = input[2];
  g.width = input[3];
  g.out_channels = weight[0];
  g.kernel_h = weight[2];
  g.kernel_w = weight[3];
  g.stride = stride;
  g.pad = pad;
  if (g.height + 2 * pad < g.kernel_h || g.width + 2 * pad < g.kernel_w) {
    throw ShapeError("conv2d kernel larger than padded input");
  }
  return g;
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(dst, ow, T{0});
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T{0}
                          : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* gx) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), p = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
        const T* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * p;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = gx + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

/// y[n] = w * x[n] (+ bias). `x` holds `batch` samples of C*H*W values.
template <typename T>
void conv_forward(const T* x, std::size_t batch, const ConvGeometry& g,
                  const T* w, const T* bias, T* y) {
  const std::size_t in_sz = g.channels * g.height * g.width;
  const std::size_t p = g.positions();
  const std::size_t out_sz = g.out_channels * p;
  CMapMat<T> wm(w, g.out_channels, g.patch());
  std::vector<T> cols(g.pointwise() ? 0 : g.patch() * p);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* col_ptr = x + n * in_sz;
    if (!g.pointwise()) {
      im2col(x + n * in_sz, g, cols.data());
      col_ptr = cols.data();
    }
    MapMat<T> ym(y + n * out_sz, g.out_channels, p);
    ym.noalias() = wm * CMapMat<T>(col_ptr, g.patch(), p);
    if (bias) {
      for (std::size_t o = 0; o < g.out_channels; ++o) ym.row(o).array() += bias[o];
    }
  }
}

/// Accumulates gradients. Any of gx, gw, gb may be null.
template <typename T>
void conv_backward(const T* x, std::size_t batch, const ConvGeometry& g,
                   const T* w, const T* gy, T* gx, T* gw, T* gb) {
  const std::size_t in_sz = g.channels * g.height * g.width;
  const std::size_t p = g.positions();
  const std::size_t out_sz = g.out_channels * p;
  CMapMat<T> wm(w, g.out_channels, g.patch());
  std::vector<T> cols(g.pointwise() ? 0 : g.patch() * p);
  std::vector<T> gcols(gx && !g.pointwise() ? g.patch() * p : 0);
  for (std::size_t n = 0; n < batch; ++n) {
    CMapMat<T> gym(gy + n * out_sz, g.out_channels, p);
    if (gw) {
      const T* col_ptr = x + n * in_sz;
      if (!g.pointwise()) {
        im2col(x + n * in_sz, g, cols.data());
        col_ptr = cols.data();
      }
      MapMat<T> gwm(gw, g.out_channels, g.patch());
      gwm.noalias() += gym * CMapMat<T>(col_ptr, g.patch(), p).transpose();
    }
    if (gb) {
      for (std::size_t o = 0; o < g.out_channels; ++o) gb[o] += gym.row(o).sum();
    }
    if (gx) {
      if (g.pointwise()) {
        MapMat<T> gxm(gx + n * in_sz, g.patch(), p);
        gxm.noalias() += wm.transpose() * gym;
      } else {
        MapMat<T> gcm(gcols.data(), g.patch(), p);
        gcm.noalias() = wm.transpose() * gym;
        col2im_add(gcols.data(), g, gx + n * in_sz);
      }
    }
  }
}

struct PoolGeometry {
  std::size_t planes = 0;  // batch * channels
  std::size_t height = 0, width = 0, window = 2, stride = 2;
  std::size_t out_h() const { return (height - window) / stride + 1; }
  std::size_t out_w() const { return (width - window) / stride + 1; }
};

inline PoolGeometry pool_geometry(const Shape& s, std::size_t window,
                                  std::size_t stride) {
  if (s.size() != 4) throw ShapeError("pooling expects 4-D input");
  if (window == 0 || stride == 0) throw ShapeError("pool window/stride must be positive");
  if (window > s[2] || window > s[3]) {
    throw ShapeError("pool window " + std::to_string(window) +
                     " exceeds spatial extent " + to_string(s));
  }
  return PoolGeometry{s[0] * s[1], s[2], s[3], window, stride};
}

/// Window argmax under a key; strict comparison keeps the lowest row-major
/// index on ties.
template <typename T, typename Key>
void argmax_pool(const PoolGeometry& g, Key key, std::uint32_t* arg) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t pl = 0; pl < g.planes; ++pl) {
    const std::size_t base = pl * g.height * g.width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (oy * g.stride) * g.width + ox * g.stride;
        T best_key = key(best);
        for (std::size_t ki = 0; ki < g.window; ++ki) {
          for (std::size_t kj = 0; kj < g.window; ++kj) {
            const std::size_t idx =
                base + (oy * g.stride + ki) * g.width + ox * g.stride + kj;
            const T k = key(idx);
            if (k > best_key) {
              best_key = k;
              best = idx;
            }
          }
        }
        arg[(pl * oh + oy) * ow + ox] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

template <typename T>
void avg_pool(const PoolGeometry& g, const T* x, T* y) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const T scale = T{1} / static_cast<T>(g.window * g.window);
  for (std::size_t pl = 0; pl < g.planes; ++pl) {
    const T* src = x + pl * g.height * g.width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T s{0};
        for (std::size_t ki = 0; ki < g.window; ++ki)
          for (std::size_t kj = 0; kj < g.window; ++kj)
            s += src[(oy * g.stride + ki) * g.width + ox * g.stride + kj];
        y[(pl * oh + oy) * ow + ox] = s * scale;
      }
    }
  }
}

template <typename T>
void avg_pool_backward(const PoolGeometry& g, const T* gy, T* gx) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const T scale = T{1} / static_cast<T>(g.window * g.window);
  for (std::size_t pl = 0; pl < g.planes; ++pl) {
    T* dst = gx + pl * g.height * g.width;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const T v = gy[(pl * oh + oy) * ow + ox] * scale;
        for (std::size_t ki = 0; ki < g.window; ++ki)
          for (std::size_t kj = 0; kj < g.window; ++kj)
            dst[(oy * g.stride + ki) * g.width + ox * g.stride + kj] += v;
      }
    }
  }
}

}  // namespace phasefort::kernels

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

// Differentiable operations on tape variables.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <type_traits>
#include <vector>

#include "phasefort/autodiff.hpp"
#include "phasefort/kernels.hpp"
#include "phasefort/ops.hpp"

namespace phasefort::ag {

namespace detail {

template <typename T>
void require_same_kind(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.is_complex() != b.is_complex()) {
    throw ShapeError(std::string(op) + ": mixing real and complex operands");
  }
  require_same_shape(a.re(), b.re(), op);
}

inline std::size_t batch_of(const Shape& s) { return s.empty() ? 1 : s[0]; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_kind(a, b, "add");
  const bool cx = a.is_complex();
  Tensor<T> re = a.re() + b.re();
  Tensor<T> im = cx ? a.im() + b.im() : Tensor<T>();
  const int ia = a.id(), ib = b.id();
  return a.tape().push("add", {a, b}, std::move(re), std::move(im), cx,
                       [ia, ib, cx](Tape<T>& t, const Node<T>& n) {
                         for (int p : {ia, ib}) {
                           if (!t.needs_grad(p)) continue;
                           axpy(t.grad_re(p), n.gre);
                           if (cx) axpy(t.grad_im(p), n.gim);
                         }
                       });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  const bool cx = a.is_complex();
  Tensor<T> re = a.re() * s;
  Tensor<T> im = cx ? a.im() * s : Tensor<T>();
  const int ia = a.id();
  return a.tape().push("scale", {a}, std::move(re), std::move(im), cx,
                       [ia, s, cx](Tape<T>& t, const Node<T>& n) {
                         axpy(t.grad_re(ia), n.gre, s);
                         if (cx) axpy(t.grad_im(ia), n.gim, s);
                       });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add(a, scale(b, T{-1}));
}

/// Elementwise product of two real tensors.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.is_complex() || b.is_complex()) throw Error("mul expects real tensors");
  require_same_shape(a.re(), b.re(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.re()[i] * b.re()[i];
  const int ia = a.id(), ib = b.id();
  return a.tape().push("mul", {a, b}, std::move(out), {}, false,
                       [ia, ib](Tape<T>& t, const Node<T>& n) {
                         const Tensor<T>& av = t.node(ia).re;
                         const Tensor<T>& bv = t.node(ib).re;
                         if (t.needs_grad(ia)) {
                           auto& g = t.grad_re(ia);
                           for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.gre[i] * bv[i];
                         }
                         if (t.needs_grad(ib)) {
                           auto& g = t.grad_re(ib);
                           for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.gre[i] * av[i];
                         }
                       });
}

/// Sum of all elements of a real tensor, as a (1)-shaped scalar.
template <typename T>
Var<T> sum(const Var<T>& a) {
  if (a.is_complex()) throw Error("sum of a complex tensor is not a real loss");
  Tensor<T> out({1}, phasefort::sum(a.re()));
  const int ia = a.id();
  return a.tape().push("sum", {a}, std::move(out), {}, false,
                       [ia](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ia);
                         const T v = n.gre[0];
                         for (auto& x : g.data()) x += v;
                       });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.re().numel()));
}

/// sum(w_re * re) + sum(w_im * im); a generic linear read-out for checks.
template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& w_re, const Tensor<T>& w_im = {}) {
  require_same_shape(a.re(), w_re, "weighted_sum");
  const bool cx = a.is_complex() && !w_im.empty();
  long double s = 0;
  for (std::size_t i = 0; i < w_re.numel(); ++i) s += a.re()[i] * w_re[i];
  if (cx) {
    require_same_shape(a.im(), w_im, "weighted_sum");
    for (std::size_t i = 0; i < w_im.numel(); ++i) s += a.im()[i] * w_im[i];
  }
  const int ia = a.id();
  return a.tape().push("weighted_sum", {a}, Tensor<T>({1}, static_cast<T>(s)), {}, false,
                       [ia, w_re, w_im, cx](Tape<T>& t, const Node<T>& n) {
                         axpy(t.grad_re(ia), w_re, n.gre[0]);
                         if (cx) axpy(t.grad_im(ia), w_im, n.gre[0]);
                       });
}

// ---------------------------------------------------------------------------
// Complex plumbing

template <typename T>
Var<T> make_complex(const Var<T>& a, const Var<T>& b) {
  if (a.is_complex() || b.is_complex()) throw Error("make_complex expects real planes");
  require_same_shape(a.re(), b.re(), "make_complex");
  const int ia = a.id(), ib = b.id();
  return a.tape().push("make_complex", {a, b}, a.re(), b.re(), true,
                       [ia, ib](Tape<T>& t, const Node<T>& n) {
                         if (t.needs_grad(ia)) axpy(t.grad_re(ia), n.gre);
                         if (t.needs_grad(ib)) axpy(t.grad_re(ib), n.gim);
                       });
}

template <typename T>
Var<T> real_part(const Var<T>& x) {
  if (!x.is_complex()) throw Error("real_part of a real tensor");
  const int ix = x.id();
  return x.tape().push("real_part", {x}, x.re(), {}, false,
                       [ix](Tape<T>& t, const Node<T>& n) { axpy(t.grad_re(ix), n.gre); });
}

template <typename T>
Var<T> imag_part(const Var<T>& x) {
  if (!x.is_complex()) throw Error("imag_part of a real tensor");
  const int ix = x.id();
  return x.tape().push("imag_part", {x}, x.im(), {}, false,
                       [ix](Tape<T>& t, const Node<T>& n) { axpy(t.grad_im(ix), n.gre); });
}

/// x[n] * exp(i theta[n]); the adjoint is rotation by -theta.
template <typename T>
Var<T> rotate(const Var<T>& x, std::vector<double> theta) {
  if (!x.is_complex()) throw Error("rotate expects a complex tensor");
  ComplexTensor<T> out = phasefort::rotate(x.complex_value(), std::span<const double>(theta));
  const int ix = x.id();
  return x.tape().push(
      "rotate", {x}, std::move(out.re), std::move(out.im), true,
      [ix, theta](Tape<T>& t, const Node<T>& n) {
        std::vector<double> neg(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) neg[i] = -theta[i];
        ComplexTensor<T> g = phasefort::rotate(ComplexTensor<T>(n.gre, n.gim),
                                               std::span<const double>(neg));
        axpy(t.grad_re(ix), g.re);
        axpy(t.grad_im(ix), g.im);
      });
}

template <typename T>
Var<T> rotate(const Var<T>& x, double theta) {
  return rotate(x, std::vector<double>{theta});
}

// ---------------------------------------------------------------------------
// Convolution and dense layers

/// Real kernel over a real or complex input. Complex inputs take no bias.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::type_identity_t<Var<T>>* bias, std::size_t stride,
              std::size_t pad) {
  const bool cx = x.is_complex();
  if (cx && bias) throw Error("conv2d: complex features take no bias term");
  if (w.is_complex()) throw Error("conv2d: kernels are real");
  const auto g = kernels::conv_geometry(x.shape(), w.shape(), stride, pad);
  if (bias && bias->re().numel() != g.out_channels) throw ShapeError("conv2d bias size");
  const std::size_t batch = x.shape()[0];
  const Shape out_shape{batch, g.out_channels, g.out_h(), g.out_w()};
  Tensor<T> re(out_shape), im;
  const T* b = bias ? bias->re().raw() : nullptr;
  kernels::conv_forward(x.re().raw(), batch, g, w.re().raw(), b, re.raw());
  if (cx) {
    im = Tensor<T>(out_shape);
    kernels::conv_forward(x.im().raw(), batch, g, w.re().raw(), static_cast<const T*>(nullptr), im.raw());
  }
  const int ix = x.id(), iw = w.id(), ib = bias ? bias->id() : -1;
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  return x.tape().push(
      "conv2d", parents, std::move(re), std::move(im), cx,
      [=](Tape<T>& t, const Node<T>& n) {
        const auto& xn = t.node(ix);
        const T* wv = t.node(iw).re.raw();
        T* gx = t.needs_grad(ix) ? t.grad_re(ix).raw() : nullptr;
        T* gw = t.needs_grad(iw) ? t.grad_re(iw).raw() : nullptr;
        T* gb = (ib >= 0 && t.needs_grad(ib)) ? t.grad_re(ib).raw() : nullptr;
        kernels::conv_backward(xn.re.raw(), batch, g, wv, n.gre.raw(), gx, gw, gb);
        if (cx) {
          T* gxi = t.needs_grad(ix) ? t.grad_im(ix).raw() : nullptr;
          kernels::conv_backward(xn.im.raw(), batch, g, wv, n.gim.raw(), gxi, gw,
                                 static_cast<T*>(nullptr));
        }
      });
}

/// y = flatten(x) W^T + b with W shaped (out, in).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::type_identity_t<Var<T>>* bias) {
  if (x.is_complex()) throw Error("linear: real input expected");
  const std::size_t batch = x.shape()[0];
  const std::size_t in = x.re().numel() / batch;
  if (w.shape().size() != 2 || w.shape()[1] != in) {
    throw ShapeError("linear: weight " + to_string(w.shape()) + " vs input " +
                     to_string(x.shape()));
  }
  const std::size_t out = w.shape()[0];
  Tensor<T> y({batch, out});
  kernels::CMapMat<T> xm(x.re().raw(), batch, in);
  kernels::CMapMat<T> wm(w.re().raw(), out, in);
  kernels::MapMat<T> ym(y.raw(), batch, out);
  ym.noalias() = xm * wm.transpose();
  if (bias) {
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t o = 0; o < out; ++o) y[n * out + o] += bias->re()[o];
  }
  const int ix = x.id(), iw = w.id(), ib = bias ? bias->id() : -1;
  std::vector<Var<T>> parents{x, w};
  if (bias) parents.push_back(*bias);
  return x.tape().push("linear", parents, std::move(y), {}, false,
                       [=](Tape<T>& t, const Node<T>& n) {
                         kernels::CMapMat<T> gy(n.gre.raw(), batch, out);
                         if (t.needs_grad(ix)) {
                           kernels::MapMat<T> gx(t.grad_re(ix).raw(), batch, in);
                           gx.noalias() += gy * kernels::CMapMat<T>(t.node(iw).re.raw(), out, in);
                         }
                         if (t.needs_grad(iw)) {
                           kernels::MapMat<T> gw(t.grad_re(iw).raw(), out, in);
                           gw.noalias() +=
                               gy.transpose() * kernels::CMapMat<T>(t.node(ix).re.raw(), batch, in);
                         }
                         if (ib >= 0 && t.needs_grad(ib)) {
                           auto& gb = t.grad_re(ib);
                           for (std::size_t r = 0; r < batch; ++r)
                             for (std::size_t o = 0; o < out; ++o) gb[o] += n.gre[r * out + o];
                         }
                       });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

/// ReLU. On a complex tensor it acts on each plane independently, which is
/// not phase-equivariant.
template <typename T>
Var<T> relu(const Var<T>& x) {
  const bool cx = x.is_complex();
  auto apply = [](const Tensor<T>& v) {
    Tensor<T> o = v;
    for (auto& e : o.data()) e = e > T{0} ? e : T{0};
    return o;
  };
  const int ix = x.id();
  return x.tape().push("relu", {x}, apply(x.re()), cx ? apply(x.im()) : Tensor<T>(), cx,
                       [ix, cx](Tape<T>& t, const Node<T>& n) {
                         const auto& xn = t.node(ix);
                         auto& g = t.grad_re(ix);
                         for (std::size_t i = 0; i < g.numel(); ++i)
                           if (xn.re[i] > T{0}) g[i] += n.gre[i];
                         if (cx) {
                           auto& gi = t.grad_im(ix);
                           for (std::size_t i = 0; i < gi.numel(); ++i)
                             if (xn.im[i] > T{0}) gi[i] += n.gim[i];
                         }
                       });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  if (x.is_complex()) throw Error("sigmoid: real input expected");
  Tensor<T> y = x.re();
  for (auto& e : y.data()) e = T{1} / (T{1} + std::exp(-e));
  const int ix = x.id();
  return x.tape().push("sigmoid", {x}, y, {}, false, [ix](Tape<T>& t, const Node<T>& n) {
    auto& g = t.grad_re(ix);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.gre[i] * n.re[i] * (T{1} - n.re[i]);
  });
}

/// delta(f) = f * |f| / max(|f|, c_k) with one threshold per channel.
/// When `c_from_batch` is set, c_k = mean |f| over (batch, h, w) + 1e-8 and
/// gradients flow through it; otherwise `c` is a constant.
template <typename T>
Var<T> delta(const Var<T>& x, std::vector<T> c, bool c_from_batch) {
  if (!x.is_complex()) throw Error("delta expects a complex tensor");
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("delta expects (n, c, h, w)");
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  const Tensor<T>& re = x.re();
  const Tensor<T>& im = x.im();
  Tensor<T> mag(s);
  for (std::size_t i = 0; i < mag.numel(); ++i) mag[i] = std::hypot(re[i], im[i]);
  if (c_from_batch) {
    c.assign(ch, T{0});
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t k = 0; k < ch; ++k)
        for (std::size_t i = 0; i < hw; ++i) c[k] += mag[(n * ch + k) * hw + i];
    for (auto& v : c) v = v / static_cast<T>(batch * hw) + static_cast<T>(1e-8);
  } else if (c.size() == 1) {
    c.assign(ch, c[0]);
  }
  if (c.size() != ch) throw ShapeError("delta: threshold count does not match channels");
  for (T v : c) {
    if (!(v > T{0})) throw NumericError("delta threshold must be positive");
  }
  Tensor<T> ore(s), oim(s);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t k = 0; k < ch; ++k) {
      const T ck = c[k];
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t e = (n * ch + k) * hw + i;
        const T scale_e = mag[e] > ck ? T{1} : mag[e] / ck;
        ore[e] = re[e] * scale_e;
        oim[e] = im[e] * scale_e;
      }
    }
  }
  const int ix = x.id();
  auto tape_out = x.tape().push(
      "delta", {x}, std::move(ore), std::move(oim), true,
      [=, mag = std::move(mag)](Tape<T>& t, const Node<T>& n) {
        const auto& xn = t.node(ix);
        auto& gre = t.grad_re(ix);
        auto& gim = t.grad_im(ix);
        for (std::size_t k = 0; k < ch; ++k) {
          const T ck = c[k];
          T gc{0};
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t e = (b * ch + k) * hw + i;
              const T gr = n.gre[e], gi = n.gim[e];
              if (mag[e] > ck) {
                gre[e] += gr;
                gim[e] += gi;
                continue;
              }
              const T r = mag[e];
              if (r <= T{0}) continue;
              const T a = xn.re[e], bb = xn.im[e];
              gre[e] += (gr * (r + a * a / r) + gi * a * bb / r) / ck;
              gim[e] += (gi * (r + bb * bb / r) + gr * a * bb / r) / ck;
              gc -= (gr * a + gi * bb) * r / (ck * ck);
            }
          }
          if (!c_from_batch || gc == T{0}) continue;
          const T denom = static_cast<T>(batch * hw);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t e = (b * ch + k) * hw + i;
              if (mag[e] <= T{0}) continue;
              gre[e] += gc * xn.re[e] / (mag[e] * denom);
              gim[e] += gc * xn.im[e] / (mag[e] * denom);
            }
          }
        }
      });
  return tape_out;
}

/// Per-channel mean of |f|^2 over (batch, h, w).
template <typename T>
std::vector<T> channel_mean_sq(const ComplexTensor<T>& f) {
  const Shape& s = f.shape();
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  std::vector<T> m(ch, T{0});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t e = (n * ch + k) * hw + i;
        m[k] += f.re[e] * f.re[e] + f.im[e] * f.im[e];
      }
  for (auto& v : m) v /= static_cast<T>(batch * hw);
  return m;
}

/// Per-channel mean of |f| over (batch, h, w).
template <typename T>
std::vector<T> channel_mean_abs(const ComplexTensor<T>& f) {
  const Shape& s = f.shape();
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  std::vector<T> m(ch, T{0});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t e = (n * ch + k) * hw + i;
        m[k] += std::hypot(f.re[e], f.im[e]);
      }
  for (auto& v : m) v /= static_cast<T>(batch * hw);
  return m;
}

inline constexpr double kNormEpsilon = 1e-8;

/// f / sqrt(mean_{batch,h,w} |f|^2 + eps), per channel. With `from_batch`
/// false, `mean_sq` supplies frozen statistics and no gradient flows into them.
template <typename T>
Var<T> complex_norm(const Var<T>& x, std::vector<T> mean_sq, bool from_batch) {
  if (!x.is_complex()) throw Error("complex_norm expects a complex tensor");
  const Shape& s = x.shape();
  if (s.size() != 4 || s[0] == 0 || s[2] * s[3] == 0) {
    throw ShapeError("complex_norm expects a nonempty (n, c, h, w) tensor");
  }
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  if (from_batch) mean_sq = channel_mean_sq(x.complex_value());
  if (mean_sq.size() != ch) throw ShapeError("complex_norm: statistic count mismatch");
  std::vector<T> denom(ch);
  for (std::size_t k = 0; k < ch; ++k)
    denom[k] = std::sqrt(mean_sq[k] + static_cast<T>(kNormEpsilon));
  Tensor<T> ore(s), oim(s);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t e = (n * ch + k) * hw + i;
        ore[e] = x.re()[e] / denom[k];
        oim[e] = x.im()[e] / denom[k];
      }
  const int ix = x.id();
  return x.tape().push(
      "complex_norm", {x}, std::move(ore), std::move(oim), true,
      [=](Tape<T>& t, const Node<T>& n) {
        const auto& xn = t.node(ix);
        auto& gre = t.grad_re(ix);
        auto& gim = t.grad_im(ix);
        const T count = static_cast<T>(batch * hw);
        for (std::size_t k = 0; k < ch; ++k) {
          const T d = denom[k];
          T coef{0};
          if (from_batch) {
            T gs{0};
            for (std::size_t b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t e = (b * ch + k) * hw + i;
                gs += n.gre[e] * xn.re[e] + n.gim[e] * xn.im[e];
              }
            coef = -gs / (d * d * d * count);
          }
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t e = (b * ch + k) * hw + i;
              gre[e] += n.gre[e] / d + coef * xn.re[e];
              gim[e] += n.gim[e] / d + coef * xn.im[e];
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling

/// Max pooling that copies, for each window, the element of largest
/// modulus (complex) or largest value (real). Lowest row-major index wins ties.
template <typename T>
Var<T> max_pool(const Var<T>& x, std::size_t window, std::size_t stride) {
  const auto g = kernels::pool_geometry(x.shape(), window, stride);
  const bool cx = x.is_complex();
  const Shape out_shape{x.shape()[0], x.shape()[1], g.out_h(), g.out_w()};
  auto arg = std::make_shared<std::vector<std::uint32_t>>(numel_of(out_shape));
  const Tensor<T>& re = x.re();
  if (cx) {
    const Tensor<T>& im = x.im();
    kernels::argmax_pool<T>(g, [&](std::size_t i) { return re[i] * re[i] + im[i] * im[i]; },
                            arg->data());
  } else {
    kernels::argmax_pool<T>(g, [&](std::size_t i) { return re[i]; }, arg->data());
  }
  Tensor<T> ore(out_shape), oim(cx ? out_shape : Shape{});
  for (std::size_t o = 0; o < arg->size(); ++o) {
    ore[o] = re[(*arg)[o]];
    if (cx) oim[o] = x.im()[(*arg)[o]];
  }
  if (!cx) oim = Tensor<T>();
  const int ix = x.id();
  return x.tape().push(cx ? "mag_maxpool" : "max_pool", {x}, std::move(ore), std::move(oim), cx,
                       [ix, arg, cx](Tape<T>& t, const Node<T>& n) {
                         auto& gre = t.grad_re(ix);
                         for (std::size_t o = 0; o < arg->size(); ++o) gre[(*arg)[o]] += n.gre[o];
                         if (cx) {
                           auto& gim = t.grad_im(ix);
                           for (std::size_t o = 0; o < arg->size(); ++o)
                             gim[(*arg)[o]] += n.gim[o];
                         }
                       });
}

template <typename T>
Var<T> avg_pool(const Var<T>& x, std::size_t window, std::size_t stride) {
  const auto g = kernels::pool_geometry(x.shape(), window, stride);
  const bool cx = x.is_complex();
  const Shape out_shape{x.shape()[0], x.shape()[1], g.out_h(), g.out_w()};
  Tensor<T> ore(out_shape), oim;
  kernels::avg_pool(g, x.re().raw(), ore.raw());
  if (cx) {
    oim = Tensor<T>(out_shape);
    kernels::avg_pool(g, x.im().raw(), oim.raw());
  }
  const int ix = x.id();
  return x.tape().push("avg_pool", {x}, std::move(ore), std::move(oim), cx,
                       [ix, g, cx](Tape<T>& t, const Node<T>& n) {
                         kernels::avg_pool_backward(g, n.gre.raw(), t.grad_re(ix).raw());
                         if (cx) kernels::avg_pool_backward(g, n.gim.raw(), t.grad_im(ix).raw());
                       });
}

// ---------------------------------------------------------------------------
// Masks and normalization

/// Multiplies every element (both planes) by the matching mask entry.
template <typename T>
Var<T> apply_mask(const Var<T>& x, Tensor<T> mask) {
  require_same_shape(x.re(), mask, "apply_mask");
  const bool cx = x.is_complex();
  auto mul = [&](const Tensor<T>& v) {
    Tensor<T> o = v;
    for (std::size_t i = 0; i < o.numel(); ++i) o[i] *= mask[i];
    return o;
  };
  Tensor<T> ore = mul(x.re());
  Tensor<T> oim = cx ? mul(x.im()) : Tensor<T>();
  const int ix = x.id();
  return x.tape().push("mask", {x}, std::move(ore), std::move(oim), cx,
                       [ix, cx, mask = std::move(mask)](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ix);
                         for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.gre[i] * mask[i];
                         if (cx) {
                           auto& gi = t.grad_im(ix);
                           for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += n.gim[i] * mask[i];
                         }
                       });
}

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Real batch normalization over (batch, h, w) per channel with affine
/// gamma/beta. In training the batch statistics are used and returned
/// through `batch_mean`/`batch_var` (biased variance).
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  const std::vector<T>& run_mean, const std::vector<T>& run_var, bool training,
                  std::vector<T>* batch_mean = nullptr, std::vector<T>* batch_var = nullptr) {
  if (x.is_complex()) throw Error("batch_norm: real input expected");
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("batch_norm expects (n, c, h, w)");
  const std::size_t batch = s[0], ch = s[1], hw = s[2] * s[3];
  const T count = static_cast<T>(batch * hw);
  std::vector<T> mu(ch, T{0}), var(ch, T{0});
  const Tensor<T>& xv = x.re();
  if (training) {
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t k = 0; k < ch; ++k)
        for (std::size_t i = 0; i < hw; ++i) mu[k] += xv[(n * ch + k) * hw + i];
    for (auto& m : mu) m /= count;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t k = 0; k < ch; ++k)
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = xv[(n * ch + k) * hw + i] - mu[k];
          var[k] += d * d;
        }
    for (auto& v : var) v /= count;
    if (batch_mean) *batch_mean = mu;
    if (batch_var) *batch_var = var;
  } else {
    mu = run_mean;
    var = run_var;
  }
  std::vector<T> inv(ch);
  for (std::size_t k = 0; k < ch; ++k) inv[k] = T{1} / std::sqrt(var[k] + static_cast<T>(kBatchNormEpsilon));
  Tensor<T> xhat(s), y(s);
  const Tensor<T>& gv = gamma.re();
  const Tensor<T>& bv = beta.re();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < ch; ++k)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t e = (n * ch + k) * hw + i;
        xhat[e] = (xv[e] - mu[k]) * inv[k];
        y[e] = gv[k] * xhat[e] + bv[k];
      }
  const int ix = x.id(), ig = gamma.id(), ibeta = beta.id();
  return x.tape().push(
      "batch_norm", {x, gamma, beta}, std::move(y), {}, false,
      [=, xhat = std::move(xhat)](Tape<T>& t, const Node<T>& n) {
        const Tensor<T>& gvv = t.node(ig).re;
        std::vector<T> sum_g(ch, T{0}), sum_gx(ch, T{0});
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t k = 0; k < ch; ++k)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t e = (b * ch + k) * hw + i;
              sum_g[k] += n.gre[e];
              sum_gx[k] += n.gre[e] * xhat[e];
            }
        if (t.needs_grad(ig)) {
          auto& gg = t.grad_re(ig);
          for (std::size_t k = 0; k < ch; ++k) gg[k] += sum_gx[k];
        }
        if (t.needs_grad(ibeta)) {
          auto& gb = t.grad_re(ibeta);
          for (std::size_t k = 0; k < ch; ++k) gb[k] += sum_g[k];
        }
        if (!t.needs_grad(ix)) return;
        auto& gx = t.grad_re(ix);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t k = 0; k < ch; ++k)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t e = (b * ch + k) * hw + i;
              if (training) {
                gx[e] += gvv[k] * inv[k] *
                         (n.gre[e] - sum_g[k] / count - xhat[e] * sum_gx[k] / count);
              } else {
                gx[e] += gvv[k] * inv[k] * n.gre[e];
              }
            }
      });
}

// ---------------------------------------------------------------------------
// Losses

/// Mean softmax cross-entropy; logits are (n, classes, ...) flattened per row.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  if (logits.is_complex()) throw Error("cross-entropy needs real logits");
  const std::size_t batch = logits.shape()[0];
  if (labels.size() != batch) throw ShapeError("label count does not match batch");
  const std::size_t classes = logits.re().numel() / batch;
  Tensor<T> prob({batch, classes});
  long double loss = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw Error("label " + std::to_string(labels[n]) + " out of range [0, " +
                  std::to_string(classes) + ")");
    }
    const T* z = logits.re().raw() + n * classes;
    T zmax = *std::max_element(z, z + classes);
    long double s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(static_cast<long double>(z[c] - zmax));
    const long double lse = std::log(s) + zmax;
    loss += lse - z[labels[n]];
    for (std::size_t c = 0; c < classes; ++c)
      prob[n * classes + c] = static_cast<T>(std::exp(static_cast<long double>(z[c]) - lse));
  }
  loss /= static_cast<long double>(batch);
  std::vector<int> lab(labels.begin(), labels.end());
  const int il = logits.id();
  return logits.tape().push(
      "softmax_xent", {logits}, Tensor<T>({1}, static_cast<T>(loss)), {}, false,
      [il, prob = std::move(prob), lab, batch, classes](Tape<T>& t, const Node<T>& n) {
        auto& g = t.grad_re(il);
        const T s = n.gre[0] / static_cast<T>(batch);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const T target = static_cast<int>(c) == lab[r] ? T{1} : T{0};
            g[r * classes + c] += s * (prob[r * classes + c] - target);
          }
      });
}

/// Mean squared error against a constant target.
template <typename T>
Var<T> mse(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.re(), target, "mse");
  long double s = 0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const long double d = pred.re()[i] - target[i];
    s += d * d;
  }
  const std::size_t count = target.numel();
  const int ip = pred.id();
  return pred.tape().push("mse", {pred}, Tensor<T>({1}, static_cast<T>(s / count)), {}, false,
                          [ip, target, count](Tape<T>& t, const Node<T>& n) {
                            auto& g = t.grad_re(ip);
                            const auto& p = t.node(ip).re;
                            const T k = T{2} * n.gre[0] / static_cast<T>(count);
                            for (std::size_t i = 0; i < count; ++i) g[i] += k * (p[i] - target[i]);
                          });
}

// ---------------------------------------------------------------------------
// Shape plumbing

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  const bool cx = x.is_complex();
  Tensor<T> re = x.re().reshaped(shape);
  Tensor<T> im = cx ? x.im().reshaped(shape) : Tensor<T>();
  const int ix = x.id();
  return x.tape().push("reshape", {x}, std::move(re), std::move(im), cx,
                       [ix, cx](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ix);
                         for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.gre[i];
                         if (cx) {
                           auto& gi = t.grad_im(ix);
                           for (std::size_t i = 0; i < gi.numel(); ++i) gi[i] += n.gim[i];
                         }
                       });
}

/// Concatenate along channels (axis 1) of 4-D tensors of the same kind.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  if (a.is_complex() != b.is_complex()) throw ShapeError("concat_channels: kind mismatch");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
    throw ShapeError("concat_channels: " + to_string(sa) + " vs " + to_string(sb));
  }
  const bool cx = a.is_complex();
  const std::size_t batch = sa[0], hw = sa[2] * sa[3], ca = sa[1], cb = sb[1];
  const Shape out{batch, ca + cb, sa[2], sa[3]};
  auto join = [&](const Tensor<T>& x, const Tensor<T>& y) {
    Tensor<T> o(out);
    for (std::size_t n = 0; n < batch; ++n) {
      std::copy_n(x.raw() + n * ca * hw, ca * hw, o.raw() + n * (ca + cb) * hw);
      std::copy_n(y.raw() + n * cb * hw, cb * hw, o.raw() + n * (ca + cb) * hw + ca * hw);
    }
    return o;
  };
  Tensor<T> re = join(a.re(), b.re());
  Tensor<T> im = cx ? join(a.im(), b.im()) : Tensor<T>();
  const int ia = a.id(), ib = b.id();
  return a.tape().push(
      "concat_channels", {a, b}, std::move(re), std::move(im), cx,
      [=](Tape<T>& t, const Node<T>& n) {
        auto split = [&](const Tensor<T>& g, Tensor<T>* ga, Tensor<T>* gb) {
          for (std::size_t s = 0; s < batch; ++s) {
            const T* src = g.raw() + s * (ca + cb) * hw;
            if (ga)
              for (std::size_t i = 0; i < ca * hw; ++i) (*ga)[s * ca * hw + i] += src[i];
            if (gb)
              for (std::size_t i = 0; i < cb * hw; ++i) (*gb)[s * cb * hw + i] += src[ca * hw + i];
          }
        };
        split(n.gre, t.needs_grad(ia) ? &t.grad_re(ia) : nullptr,
              t.needs_grad(ib) ? &t.grad_re(ib) : nullptr);
        if (cx) {
          split(n.gim, t.needs_grad(ia) ? &t.grad_im(ia) : nullptr,
                t.needs_grad(ib) ? &t.grad_im(ib) : nullptr);
        }
      });
}

/// Concatenate along the batch axis.
template <typename T>
Var<T> concat_batch(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_batch of nothing");
  const bool cx = parts[0].is_complex();
  std::vector<Tensor<T>> re, im;
  for (const auto& p : parts) {
    if (p.is_complex() != cx) throw ShapeError("concat_batch: kind mismatch");
    re.push_back(p.re());
    if (cx) im.push_back(p.im());
  }
  Tensor<T> ore = phasefort::concat_batch<T>(re);
  Tensor<T> oim = cx ? phasefort::concat_batch<T>(im) : Tensor<T>();
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    ids.push_back(p.id());
    sizes.push_back(p.re().numel());
  }
  return parts[0].tape().push("concat_batch", parts, std::move(ore), std::move(oim), cx,
                              [ids, sizes, cx](Tape<T>& t, const Node<T>& n) {
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  if (t.needs_grad(ids[k])) {
                                    auto& g = t.grad_re(ids[k]);
                                    for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += n.gre[off + i];
                                    if (cx) {
                                      auto& gi = t.grad_im(ids[k]);
                                      for (std::size_t i = 0; i < sizes[k]; ++i)
                                        gi[i] += n.gim[off + i];
                                    }
                                  }
                                  off += sizes[k];
                                }
                              });
}

/// Rows of the leading axis picked by `indices` (repeats allowed).
template <typename T>
Var<T> gather_batch(const Var<T>& x, std::vector<std::size_t> indices) {
  const bool cx = x.is_complex();
  Tensor<T> re = phasefort::gather_batch(x.re(), std::span<const std::size_t>(indices));
  Tensor<T> im = cx ? phasefort::gather_batch(x.im(), std::span<const std::size_t>(indices))
                    : Tensor<T>();
  const std::size_t per = x.re().numel() / std::max<std::size_t>(x.shape()[0], 1);
  const int ix = x.id();
  return x.tape().push("gather_batch", {x}, std::move(re), std::move(im), cx,
                       [ix, indices, per, cx](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ix);
                         for (std::size_t r = 0; r < indices.size(); ++r)
                           for (std::size_t i = 0; i < per; ++i)
                             g[indices[r] * per + i] += n.gre[r * per + i];
                         if (cx) {
                           auto& gi = t.grad_im(ix);
                           for (std::size_t r = 0; r < indices.size(); ++r)
                             for (std::size_t i = 0; i < per; ++i)
                               gi[indices[r] * per + i] += n.gim[r * per + i];
                         }
                       });
}

/// Nearest-neighbour 2x spatial upsampling.
template <typename T>
Var<T> upsample2x(const Var<T>& x) {
  if (x.is_complex()) throw Error("upsample2x: real input expected");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor<T> y({s[0], s[1], 2 * h, 2 * w});
  const T* src = x.re().raw();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        y[(p * 2 * h + i) * 2 * w + j] = src[(p * h + i / 2) * w + j / 2];
  const int ix = x.id();
  return x.tape().push("upsample2x", {x}, std::move(y), {}, false,
                       [ix, planes, h, w](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ix);
                         for (std::size_t p = 0; p < planes; ++p)
                           for (std::size_t i = 0; i < 2 * h; ++i)
                             for (std::size_t j = 0; j < 2 * w; ++j)
                               g[(p * h + i / 2) * w + j / 2] += n.gre[(p * 2 * h + i) * 2 * w + j];
                       });
}

/// Centre a real 4-D map inside an (out_h, out_w) canvas, zero-padding or
/// cropping symmetrically (extra row/column goes to the bottom/right).
template <typename T>
Var<T> fit_spatial(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.is_complex()) throw Error("fit_spatial: real input expected");
  const Shape& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  if (h == out_h && w == out_w) return x;
  const auto off_h = (static_cast<std::ptrdiff_t>(out_h) - static_cast<std::ptrdiff_t>(h)) / 2;
  const auto off_w = (static_cast<std::ptrdiff_t>(out_w) - static_cast<std::ptrdiff_t>(w)) / 2;
  auto map = [=](std::size_t i, std::size_t j, std::ptrdiff_t& si, std::ptrdiff_t& sj) {
    si = static_cast<std::ptrdiff_t>(i) - off_h;
    sj = static_cast<std::ptrdiff_t>(j) - off_w;
    return si >= 0 && sj >= 0 && si < static_cast<std::ptrdiff_t>(h) &&
           sj < static_cast<std::ptrdiff_t>(w);
  };
  Tensor<T> y({s[0], s[1], out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j) {
        std::ptrdiff_t si, sj;
        if (map(i, j, si, sj))
          y[(p * out_h + i) * out_w + j] =
              x.re()[(p * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)];
      }
  const int ix = x.id();
  return x.tape().push("fit_spatial", {x}, std::move(y), {}, false,
                       [=](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(ix);
                         for (std::size_t p = 0; p < planes; ++p)
                           for (std::size_t i = 0; i < out_h; ++i)
                             for (std::size_t j = 0; j < out_w; ++j) {
                               std::ptrdiff_t si, sj;
                               if (map(i, j, si, sj))
                                 g[(p * h + static_cast<std::size_t>(si)) * w +
                                   static_cast<std::size_t>(sj)] += n.gre[(p * out_h + i) * out_w + j];
                             }
                       });
}

}  // namespace phasefort::ag

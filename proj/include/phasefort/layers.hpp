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

// Layer catalogue. The complex kinds (conv_nobias, delta, complex_norm,
// mag_maxpool, avgpool, complex_dropout, skip) commute with a global phase
// rotation and are the only kinds accepted inside a processing module. The
// real kinds build the client-side encoder/decoder stacks.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "phasefort/autodiff.hpp"
#include "phasefort/graph_ops.hpp"
#include "phasefort/rng.hpp"

namespace phasefort {

enum class LayerKind {
  conv_nobias,
  delta,
  complex_norm,
  mag_maxpool,
  avgpool,
  complex_dropout,
  skip,
  real_conv,
  real_relu,
  real_bn,
  real_fc,
  real_maxpool,
  softmax,
};

enum class DeltaMode { fixed_c, channelwise };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv_nobias: return "conv_nobias";
    case LayerKind::delta: return "delta";
    case LayerKind::complex_norm: return "complex_norm";
    case LayerKind::mag_maxpool: return "mag_maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::complex_dropout: return "complex_dropout";
    case LayerKind::skip: return "skip";
    case LayerKind::real_conv: return "real_conv";
    case LayerKind::real_relu: return "real_relu";
    case LayerKind::real_bn: return "real_bn";
    case LayerKind::real_fc: return "real_fc";
    case LayerKind::real_maxpool: return "real_maxpool";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

/// Structural description of one layer. Nested `inner`/`shortcut` lists are
/// used by skip blocks: out = shortcut(f) + inner(f), with an empty shortcut
/// meaning identity.
struct LayerSpec {
  LayerKind kind = LayerKind::real_relu;
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 0;
  DeltaMode delta_mode = DeltaMode::fixed_c;
  double c = 1.0;
  double p = 0.0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::vector<LayerSpec> inner;
  std::vector<LayerSpec> shortcut;

  bool operator==(const LayerSpec&) const = default;
};

/// Kinds whose output rotates with the input phase.
inline bool is_equivariant_kind(LayerKind k) {
  switch (k) {
    case LayerKind::conv_nobias:
    case LayerKind::delta:
    case LayerKind::complex_norm:
    case LayerKind::mag_maxpool:
    case LayerKind::avgpool:
    case LayerKind::complex_dropout:
    case LayerKind::skip:
      return true;
    default:
      return false;
  }
}

inline bool is_certified(const LayerSpec& s) {
  if (!is_equivariant_kind(s.kind)) return false;
  for (const auto& l : s.inner)
    if (!is_certified(l)) return false;
  for (const auto& l : s.shortcut)
    if (!is_certified(l)) return false;
  return true;
}

inline bool all_certified(const std::vector<LayerSpec>& specs) {
  for (const auto& s : specs)
    if (!is_certified(s)) return false;
  return true;
}

namespace spec {

inline LayerSpec conv_nobias(std::string name, std::size_t in, std::size_t out, std::size_t k,
                             std::size_t stride = 1, std::size_t pad = 0) {
  LayerSpec s;
  s.kind = LayerKind::conv_nobias;
  s.name = std::move(name);
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = k;
  s.stride = stride;
  s.padding = pad;
  return s;
}

inline LayerSpec real_conv(std::string name, std::size_t in, std::size_t out, std::size_t k,
                           std::size_t stride = 1, std::size_t pad = 0) {
  LayerSpec s = conv_nobias(std::move(name), in, out, k, stride, pad);
  s.kind = LayerKind::real_conv;
  return s;
}

inline LayerSpec delta_fixed(std::string name, std::size_t channels, double c) {
  LayerSpec s;
  s.kind = LayerKind::delta;
  s.name = std::move(name);
  s.in_channels = s.out_channels = channels;
  s.delta_mode = DeltaMode::fixed_c;
  s.c = c;
  return s;
}

inline LayerSpec delta_channelwise(std::string name, std::size_t channels) {
  LayerSpec s = delta_fixed(std::move(name), channels, 1.0);
  s.delta_mode = DeltaMode::channelwise;
  return s;
}

inline LayerSpec complex_norm(std::string name, std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::complex_norm;
  s.name = std::move(name);
  s.in_channels = s.out_channels = channels;
  return s;
}

inline LayerSpec pool(LayerKind kind, std::string name, std::size_t window, std::size_t stride) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  s.window = window;
  s.stride = stride;
  return s;
}

inline LayerSpec mag_maxpool(std::string name, std::size_t window, std::size_t stride) {
  return pool(LayerKind::mag_maxpool, std::move(name), window, stride);
}
inline LayerSpec avgpool(std::string name, std::size_t window, std::size_t stride) {
  return pool(LayerKind::avgpool, std::move(name), window, stride);
}
inline LayerSpec real_maxpool(std::string name, std::size_t window, std::size_t stride) {
  return pool(LayerKind::real_maxpool, std::move(name), window, stride);
}

inline LayerSpec complex_dropout(std::string name, double p) {
  LayerSpec s;
  s.kind = LayerKind::complex_dropout;
  s.name = std::move(name);
  s.p = p;
  return s;
}

inline LayerSpec skip(std::string name, std::vector<LayerSpec> inner,
                      std::vector<LayerSpec> shortcut = {}) {
  LayerSpec s;
  s.kind = LayerKind::skip;
  s.name = std::move(name);
  s.inner = std::move(inner);
  s.shortcut = std::move(shortcut);
  return s;
}

inline LayerSpec real_relu(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::real_relu;
  s.name = std::move(name);
  return s;
}

inline LayerSpec real_bn(std::string name, std::size_t channels) {
  LayerSpec s;
  s.kind = LayerKind::real_bn;
  s.name = std::move(name);
  s.in_channels = s.out_channels = channels;
  return s;
}

inline LayerSpec real_fc(std::string name, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::real_fc;
  s.name = std::move(name);
  s.in_features = in;
  s.out_features = out;
  return s;
}

inline LayerSpec softmax(std::string name) {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  s.name = std::move(name);
  return s;
}

}  // namespace spec

/// Output (channels, height, width) of a layer for a given input.
inline Shape infer_shape(const LayerSpec& s, const Shape& in) {
  if (in.size() != 3) throw ShapeError("infer_shape expects (c, h, w)");
  auto conv_out = [&](std::size_t n) {
    if (n + 2 * s.padding < s.kernel) throw ShapeError(s.name + ": kernel larger than input");
    return (n + 2 * s.padding - s.kernel) / s.stride + 1;
  };
  switch (s.kind) {
    case LayerKind::conv_nobias:
    case LayerKind::real_conv:
      if (in[0] != s.in_channels) {
        throw ShapeError(s.name + ": expects " + std::to_string(s.in_channels) +
                         " channels, got " + std::to_string(in[0]));
      }
      return {s.out_channels, conv_out(in[1]), conv_out(in[2])};
    case LayerKind::delta:
    case LayerKind::complex_norm:
    case LayerKind::real_bn:
      if (in[0] != s.in_channels) throw ShapeError(s.name + ": channel mismatch");
      return in;
    case LayerKind::mag_maxpool:
    case LayerKind::avgpool:
    case LayerKind::real_maxpool:
      if (s.window > in[1] || s.window > in[2]) throw ShapeError(s.name + ": window exceeds input");
      return {in[0], (in[1] - s.window) / s.stride + 1, (in[2] - s.window) / s.stride + 1};
    case LayerKind::complex_dropout:
    case LayerKind::real_relu:
    case LayerKind::softmax:
      return in;
    case LayerKind::real_fc:
      if (numel_of(in) != s.in_features) throw ShapeError(s.name + ": feature count mismatch");
      return {s.out_features, 1, 1};
    case LayerKind::skip: {
      Shape a = in;
      for (const auto& l : s.inner) a = infer_shape(l, a);
      Shape b = in;
      for (const auto& l : s.shortcut) b = infer_shape(l, b);
      if (a != b) {
        throw ShapeError(s.name + ": skip branches disagree " + to_string(a) + " vs " +
                         to_string(b));
      }
      return a;
    }
  }
  throw ShapeError("unknown layer kind");
}

inline Shape infer_shape(const std::vector<LayerSpec>& specs, Shape in) {
  for (const auto& s : specs) in = infer_shape(s, in);
  return in;
}

template <typename T>
struct Context {
  bool training = false;
  /// Running statistics only move when training and this is set.
  bool update_stats = true;
  /// Source of dropout masks; two passes with equal generators see equal masks.
  Rng* rng = nullptr;
  bool check_finite = false;
};

inline constexpr double kRunningDecay = 0.9;

template <typename T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const LayerSpec& spec() const { return spec_; }
  virtual Var<T> forward(const Var<T>& x, Context<T>& ctx) = 0;
  virtual void collect(std::vector<Parameter<T>*>&) {}

 protected:
  void require_complex(const Var<T>& x) const {
    if (!x.is_complex()) throw Error(spec_.name + " (" + to_string(spec_.kind) + ") needs complex input");
  }
  void require_real(const Var<T>& x) const {
    if (x.is_complex()) throw Error(spec_.name + " (" + to_string(spec_.kind) + ") needs real input");
  }

  LayerSpec spec_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& s, Rng& rng);

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const std::vector<LayerSpec>& specs, Rng& rng) {
    for (const auto& s : specs) layers_.push_back(make_layer<T>(s, rng));
  }

  Var<T> forward(Var<T> x, Context<T>& ctx) const {
    for (const auto& l : layers_) {
      x = l->forward(x, ctx);
      if (ctx.check_finite) {
        require_finite(x.re(), l->spec().name);
        if (x.is_complex()) require_finite(x.im(), l->spec().name);
      }
    }
    return x;
  }

  /// Forward through the first `count` layers only.
  Var<T> forward_prefix(Var<T> x, Context<T>& ctx, std::size_t count) const {
    for (std::size_t i = 0; i < count && i < layers_.size(); ++i) x = layers_[i]->forward(x, ctx);
    return x;
  }

  void collect(std::vector<Parameter<T>*>& out) const {
    for (const auto& l : layers_) l->collect(out);
  }
  std::vector<Parameter<T>*> parameters() const {
    std::vector<Parameter<T>*> out;
    collect(out);
    return out;
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
  }

  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

namespace layers {

// gain 2 for layers feeding a rectifier, 1 for the linear complex convs
template <typename T>
Tensor<T> kaiming(Rng& rng, const Shape& shape, std::size_t fan_in, double gain = 2.0) {
  return sample_gaussian<T>(rng, shape, std::sqrt(gain / static_cast<double>(fan_in)));
}

template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(const LayerSpec& s, Rng& rng)
      : Layer<T>(s),
        weight_(s.name + ".weight",
                kaiming<T>(rng, {s.out_channels, s.in_channels, s.kernel, s.kernel},
                           s.in_channels * s.kernel * s.kernel, s.kind == LayerKind::conv_nobias ? 1.0 : 2.0)) {
    if (s.kind == LayerKind::real_conv) {
      bias_ = std::make_unique<Parameter<T>>(s.name + ".bias", Tensor<T>({s.out_channels}));
    }
  }

  Var<T> forward(const Var<T>& x, Context<T>&) override {
    if (bias_) {
      this->require_real(x);
      Var<T> b = x.tape().param(*bias_);
      return ag::conv2d(x, x.tape().param(weight_), &b, this->spec_.stride, this->spec_.padding);
    }
    this->require_complex(x);
    return ag::conv2d(x, x.tape().param(weight_), static_cast<const Var<T>*>(nullptr),
                      this->spec_.stride, this->spec_.padding);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    if (bias_) out.push_back(bias_.get());
  }

  Parameter<T>& weight() { return weight_; }

 private:
  Parameter<T> weight_;
  std::unique_ptr<Parameter<T>> bias_;
};

/// The modulus-thresholding nonlinearity. In channelwise mode c_k comes
/// from the batch during training and from a running average at inference.
template <typename T>
class Delta final : public Layer<T> {
 public:
  explicit Delta(const LayerSpec& s)
      : Layer<T>(s), running_c_(s.name + ".running_c", Tensor<T>({s.in_channels}, T{1}), false) {
    if (!(s.c > 0.0)) throw Error(s.name + ": c must be positive");
  }

  Var<T> forward(const Var<T>& x, Context<T>& ctx) override {
    this->require_complex(x);
    if (this->spec_.delta_mode == DeltaMode::fixed_c) {
      return ag::delta(x, std::vector<T>{static_cast<T>(this->spec_.c)}, false);
    }
    if (ctx.training) {
      if (ctx.update_stats) {
        auto batch_c = ag::channel_mean_abs(x.complex_value());
        for (std::size_t k = 0; k < batch_c.size(); ++k) {
          running_c_.value[k] = static_cast<T>(kRunningDecay) * running_c_.value[k] +
                                static_cast<T>(1.0 - kRunningDecay) * (batch_c[k] + static_cast<T>(1e-8));
        }
        running_c_.touch();
      }
      return ag::delta(x, {}, true);
    }
    return ag::delta(x, running_c_.value.storage(), false);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    if (this->spec_.delta_mode == DeltaMode::channelwise) out.push_back(&running_c_);
  }

 private:
  Parameter<T> running_c_;
};

template <typename T>
class ComplexNorm final : public Layer<T> {
 public:
  explicit ComplexNorm(const LayerSpec& s)
      : Layer<T>(s), running_ms_(s.name + ".running_mean_sq", Tensor<T>({s.in_channels}, T{1}), false) {}

  Var<T> forward(const Var<T>& x, Context<T>& ctx) override {
    this->require_complex(x);
    if (ctx.training) {
      if (ctx.update_stats) {
        auto ms = ag::channel_mean_sq(x.complex_value());
        for (std::size_t k = 0; k < ms.size(); ++k) {
          running_ms_.value[k] = static_cast<T>(kRunningDecay) * running_ms_.value[k] +
                                 static_cast<T>(1.0 - kRunningDecay) * ms[k];
        }
        running_ms_.touch();
      }
      return ag::complex_norm(x, {}, true);
    }
    return ag::complex_norm(x, running_ms_.value.storage(), false);
  }

  void collect(std::vector<Parameter<T>*>& out) override { out.push_back(&running_ms_); }

 private:
  Parameter<T> running_ms_;
};

template <typename T>
class Pool final : public Layer<T> {
 public:
  explicit Pool(const LayerSpec& s) : Layer<T>(s) {}

  Var<T> forward(const Var<T>& x, Context<T>&) override {
    const auto& s = this->spec_;
    switch (s.kind) {
      case LayerKind::mag_maxpool:
        this->require_complex(x);
        return ag::max_pool(x, s.window, s.stride);
      case LayerKind::real_maxpool:
        this->require_real(x);
        return ag::max_pool(x, s.window, s.stride);
      default:
        return ag::avg_pool(x, s.window, s.stride);
    }
  }
};

/// Inverted dropout with one Bernoulli draw per complex element shared by
/// both planes. Identity outside training.
template <typename T>
class ComplexDropout final : public Layer<T> {
 public:
  explicit ComplexDropout(const LayerSpec& s) : Layer<T>(s) {
    if (s.p < 0.0 || s.p >= 1.0) throw Error(s.name + ": dropout p must be in [0, 1)");
  }

  Var<T> forward(const Var<T>& x, Context<T>& ctx) override {
    const double p = this->spec_.p;
    if (!ctx.training || p == 0.0) return x;
    if (!ctx.rng) throw Error(this->spec_.name + ": dropout in training needs an Rng");
    Tensor<T> mask(x.shape());
    const T keep = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask.data()) m = ctx.rng->bernoulli(1.0 - p) ? keep : T{0};
    return ag::apply_mask(x, std::move(mask));
  }
};

template <typename T>
class Skip final : public Layer<T> {
 public:
  Skip(const LayerSpec& s, Rng& rng) : Layer<T>(s), inner_(s.inner, rng), shortcut_(s.shortcut, rng) {}

  Var<T> forward(const Var<T>& x, Context<T>& ctx) override {
    Var<T> a = inner_.forward(x, ctx);
    Var<T> b = shortcut_.forward(x, ctx);
    if (a.shape() != b.shape()) {
      throw ShapeError(this->spec_.name + ": skip branches disagree " + to_string(a.shape()) +
                       " vs " + to_string(b.shape()));
    }
    return ag::add(b, a);
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    inner_.collect(out);
    shortcut_.collect(out);
  }

 private:
  Sequential<T> inner_;
  Sequential<T> shortcut_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  explicit Relu(const LayerSpec& s) : Layer<T>(s) {}
  Var<T> forward(const Var<T>& x, Context<T>&) override { return ag::relu(x); }
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(const LayerSpec& s)
      : Layer<T>(s),
        gamma_(s.name + ".gamma", Tensor<T>({s.in_channels}, T{1})),
        beta_(s.name + ".beta", Tensor<T>({s.in_channels})),
        mean_(s.name + ".running_mean", Tensor<T>({s.in_channels}), false),
        var_(s.name + ".running_var", Tensor<T>({s.in_channels}, T{1}), false) {}

  Var<T> forward(const Var<T>& x, Context<T>& ctx) override {
    this->require_real(x);
    std::vector<T> bm, bv;
    Var<T> y = ag::batch_norm(x, x.tape().param(gamma_), x.tape().param(beta_), mean_.value.storage(),
                              var_.value.storage(), ctx.training, &bm, &bv);
    if (ctx.training && ctx.update_stats) {
      const T d = static_cast<T>(kRunningDecay);
      for (std::size_t k = 0; k < bm.size(); ++k) {
        mean_.value[k] = d * mean_.value[k] + (T{1} - d) * bm[k];
        var_.value[k] = d * var_.value[k] + (T{1} - d) * bv[k];
      }
      mean_.touch();
      var_.touch();
    }
    return y;
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.insert(out.end(), {&gamma_, &beta_, &mean_, &var_});
  }

 private:
  Parameter<T> gamma_, beta_, mean_, var_;
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const LayerSpec& s, Rng& rng)
      : Layer<T>(s),
        weight_(s.name + ".weight", kaiming<T>(rng, {s.out_features, s.in_features}, s.in_features)),
        bias_(s.name + ".bias", Tensor<T>({s.out_features})) {}

  Var<T> forward(const Var<T>& x, Context<T>&) override {
    this->require_real(x);
    Var<T> b = x.tape().param(bias_);
    Var<T> y = ag::linear(x, x.tape().param(weight_), &b);
    return ag::reshape(y, {x.shape()[0], this->spec_.out_features, 1, 1});
  }

  void collect(std::vector<Parameter<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Parameter<T> weight_, bias_;
};

/// Row-wise softmax over all non-batch axes.
template <typename T>
Var<T> softmax(const Var<T>& z) {
  if (z.is_complex()) throw Error("softmax: real input expected");
  const std::size_t batch = z.shape()[0];
  const std::size_t classes = z.re().numel() / batch;
  Tensor<T> y(z.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* row = z.re().raw() + n * classes;
    const T m = *std::max_element(row, row + classes);
    long double s = 0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(static_cast<long double>(row[c] - m));
    for (std::size_t c = 0; c < classes; ++c)
      y[n * classes + c] = static_cast<T>(std::exp(static_cast<long double>(row[c] - m)) / s);
  }
  const int iz = z.id();
  return z.tape().push("softmax", {z}, std::move(y), {}, false,
                       [iz, batch, classes](Tape<T>& t, const Node<T>& n) {
                         auto& g = t.grad_re(iz);
                         for (std::size_t r = 0; r < batch; ++r) {
                           T dot{0};
                           for (std::size_t c = 0; c < classes; ++c)
                             dot += n.gre[r * classes + c] * n.re[r * classes + c];
                           for (std::size_t c = 0; c < classes; ++c) {
                             const std::size_t e = r * classes + c;
                             g[e] += n.re[e] * (n.gre[e] - dot);
                           }
                         }
                       });
}

template <typename T>
class Softmax final : public Layer<T> {
 public:
  explicit Softmax(const LayerSpec& s) : Layer<T>(s) {}
  Var<T> forward(const Var<T>& x, Context<T>&) override { return softmax(x); }
};

}  // namespace layers

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& s, Rng& rng) {
  switch (s.kind) {
    case LayerKind::conv_nobias:
    case LayerKind::real_conv: return std::make_unique<layers::Conv<T>>(s, rng);
    case LayerKind::delta: return std::make_unique<layers::Delta<T>>(s);
    case LayerKind::complex_norm: return std::make_unique<layers::ComplexNorm<T>>(s);
    case LayerKind::mag_maxpool:
    case LayerKind::avgpool:
    case LayerKind::real_maxpool: return std::make_unique<layers::Pool<T>>(s);
    case LayerKind::complex_dropout: return std::make_unique<layers::ComplexDropout<T>>(s);
    case LayerKind::skip: return std::make_unique<layers::Skip<T>>(s, rng);
    case LayerKind::real_relu: return std::make_unique<layers::Relu<T>>(s);
    case LayerKind::real_bn: return std::make_unique<layers::BatchNorm<T>>(s);
    case LayerKind::real_fc: return std::make_unique<layers::Dense<T>>(s, rng);
    case LayerKind::softmax: return std::make_unique<layers::Softmax<T>>(s);
  }
  throw Error("unknown layer kind");
}

// ---------------------------------------------------------------------------
// Equivariance audit

struct EquivarianceReport {
  double max_residual = 0.0;
  bool pass = false;
  std::size_t trials = 0;
};

/// A deterministic complex map under audit. `trial` lets stochastic layers
/// pin their randomness so both evaluations of a trial see the same draws.
template <typename T>
using ComplexMap = std::function<ComplexTensor<T>(const ComplexTensor<T>&, std::size_t trial)>;

/// max over trials of |phi(e^{i theta} f) - e^{i theta} phi(f)|_inf / max(|phi(f)|_inf, 1e-8),
/// with f complex Gaussian and theta uniform on [0, 2 pi).
template <typename T>
EquivarianceReport certify_equivariance(const ComplexMap<T>& phi, const Shape& input_shape,
                                        std::size_t trials, double tol, Rng& rng) {
  EquivarianceReport report;
  report.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    const ComplexTensor<T> f = sample_complex_gaussian<T>(rng, input_shape);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const ComplexTensor<T> lhs = phi(phasefort::rotate(f, theta), t);
    const ComplexTensor<T> rhs = phasefort::rotate(phi(f, t), theta);
    const double scale = std::max(static_cast<double>(max_modulus(rhs)), 1e-8);
    report.max_residual =
        std::max(report.max_residual, static_cast<double>(max_modulus_diff(lhs, rhs)) / scale);
  }
  report.pass = report.max_residual < tol;
  return report;
}

/// Audit of a layer stack. In training mode statistics are not updated and
/// dropout masks are pinned per trial.
template <typename T>
EquivarianceReport certify_equivariance(const Sequential<T>& module, const Shape& input_shape,
                                        std::size_t trials, double tol, Rng& rng,
                                        bool training = false) {
  const std::uint64_t mask_seed = rng.next_u64();
  ComplexMap<T> phi = [&](const ComplexTensor<T>& f, std::size_t trial) {
    Tape<T> tape;
    Rng mask_rng = Rng(mask_seed).fork(trial);
    Context<T> ctx;
    ctx.training = training;
    ctx.update_stats = false;
    ctx.rng = &mask_rng;
    Var<T> y = module.forward(tape.constant(f), ctx);
    if (!y.is_complex()) throw Error("audited module produced a real output");
    return y.complex_value();
  };
  return certify_equivariance<T>(phi, input_shape, trials, tol, rng);
}

}  // namespace phasefort

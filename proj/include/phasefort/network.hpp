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

// Concrete architectures split into an encoder g (client), a processing
// module phi (server) and a decoder d (client).
//
// LeNet: g = conv1 + generator head, phi = the rest of the feature stack,
// d = softmax.
// ResNet (CIFAR layout, depth 6n+2): g = stem + stage 1 + generator head,
// phi = stage 2 + first block of stage 3. The alpha variant's d is the
// remaining stage-3 blocks + pooling + classifier; beta keeps g and phi but
// d is only the last residual block + pooling + classifier.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "phasefort/layers.hpp"
#include "phasefort/rng.hpp"

namespace phasefort {

class CertificationError : public Error {
 public:
  using Error::Error;
};

enum class Variant { complex, original, additional_layers, noisy };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::complex: return "complex";
    case Variant::original: return "original";
    case Variant::additional_layers: return "additional_layers";
    case Variant::noisy: return "noisy";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "complex") return Variant::complex;
  if (s == "original") return Variant::original;
  if (s == "additional_layers" || s == "additional-layers") return Variant::additional_layers;
  if (s == "noisy") return Variant::noisy;
  throw Error("unknown variant '" + s + "' (expected complex, original, additional_layers or noisy)");
}

struct ArchId {
  std::string family;      // "lenet" or "resnet"
  std::size_t depth = 0;   // resnet only
  std::string split;       // "alpha" / "beta" for resnet, empty for lenet

  std::string name() const {
    if (family == "lenet") return "lenet";
    return "resnet" + std::to_string(depth) + "-" + split;
  }
  bool operator==(const ArchId&) const = default;
};

inline ArchId parse_arch(const std::string& s) {
  if (s == "lenet") return {"lenet", 0, ""};
  if (s.rfind("resnet", 0) == 0) {
    const auto dash = s.find('-');
    const std::string depth_str = s.substr(6, dash == std::string::npos ? std::string::npos : dash - 6);
    const std::string split = dash == std::string::npos ? "alpha" : s.substr(dash + 1);
    std::size_t depth = 0;
    try {
      depth = std::stoul(depth_str);
    } catch (const std::exception&) {
      throw Error("unsupported architecture '" + s + "'");
    }
    static const std::set<std::size_t> kDepths = {20, 32, 44, 56, 110};
    if (!kDepths.count(depth) || (split != "alpha" && split != "beta")) {
      throw Error("unsupported architecture '" + s +
                  "' (expected lenet or resnet{20,32,44,56,110}-{alpha,beta})");
    }
    return {"resnet", depth, split};
  }
  throw Error("unsupported architecture '" + s + "'");
}

inline const std::vector<std::string>& shipped_archs() {
  static const std::vector<std::string> kArchs = {
      "lenet",          "resnet20-alpha", "resnet20-beta",  "resnet32-alpha",  "resnet32-beta",
      "resnet44-alpha", "resnet44-beta",  "resnet56-alpha", "resnet56-beta",   "resnet110-alpha",
      "resnet110-beta"};
  return kArchs;
}

struct NetworkDivision {
  std::string arch;
  Variant variant = Variant::complex;
  std::size_t classes = 10;
  Shape input_shape;  // (c, h, w)
  std::vector<LayerSpec> g_layers;
  std::vector<LayerSpec> phi_layers;
  std::vector<LayerSpec> d_layers;
  double gamma = 0.0;  // noise level, noisy variant only

  /// The defended pipeline runs phi on complex features.
  bool complex_phi() const { return variant == Variant::complex; }
  Shape feature_shape() const { return infer_shape(g_layers, input_shape); }
  Shape phi_output_shape() const { return infer_shape(phi_layers, feature_shape()); }
  Shape output_shape() const { return infer_shape(d_layers, phi_output_shape()); }

  bool operator==(const NetworkDivision&) const = default;
};

struct BuildOptions {
  std::size_t classes = 10;
  Shape input_shape = {3, 32, 32};
  /// LeNet thresholds: channelwise c_k or a fixed c.
  DeltaMode lenet_delta = DeltaMode::channelwise;
  double delta_c = 1.0;
  /// Dropout before the classifier stage of phi (0 disables).
  double phi_dropout = 0.0;
};

namespace detail {

inline LayerSpec generator_head(const std::string& name, std::size_t k) {
  return spec::real_conv(name, k, k, 3, 1, 1);
}

inline LayerSpec delta_for(const std::string& name, std::size_t ch, DeltaMode mode, double c) {
  return mode == DeltaMode::channelwise ? spec::delta_channelwise(name, ch) : spec::delta_fixed(name, ch, c);
}

inline std::vector<LayerSpec> lenet_g(bool head) {
  std::vector<LayerSpec> g = {spec::real_conv("g.conv1", 3, 6, 5), spec::real_relu("g.relu1")};
  if (head) g.push_back(generator_head("g.head", 6));
  return g;
}

inline std::vector<LayerSpec> lenet_phi_complex(const BuildOptions& o) {
  std::vector<LayerSpec> phi = {
      spec::mag_maxpool("phi.pool1", 2, 2),
      spec::conv_nobias("phi.conv2", 6, 16, 5),
      delta_for("phi.delta2", 16, o.lenet_delta, o.delta_c),
      spec::mag_maxpool("phi.pool2", 2, 2),
      spec::conv_nobias("phi.fc3", 16, 120, 5),
      delta_for("phi.delta3", 120, o.lenet_delta, o.delta_c),
  };
  if (o.phi_dropout > 0) phi.push_back(spec::complex_dropout("phi.drop3", o.phi_dropout));
  phi.push_back(spec::conv_nobias("phi.fc4", 120, 84, 1));
  phi.push_back(delta_for("phi.delta4", 84, o.lenet_delta, o.delta_c));
  phi.push_back(spec::conv_nobias("phi.fc5", 84, o.classes, 1));
  return phi;
}

inline std::vector<LayerSpec> lenet_phi_real(const BuildOptions& o) {
  return {
      spec::real_maxpool("phi.pool1", 2, 2),    spec::real_conv("phi.conv2", 6, 16, 5),
      spec::real_relu("phi.relu2"),             spec::real_maxpool("phi.pool2", 2, 2),
      spec::real_conv("phi.fc3", 16, 120, 5),   spec::real_relu("phi.relu3"),
      spec::real_conv("phi.fc4", 120, 84, 1),   spec::real_relu("phi.relu4"),
      spec::real_conv("phi.fc5", 84, o.classes, 1),
  };
}

// Real basic block: relu(shortcut(f) + bn(conv(relu(bn(conv(f)))))).
inline void real_block(std::vector<LayerSpec>& out, const std::string& name, std::size_t in,
                       std::size_t ch, std::size_t stride) {
  std::vector<LayerSpec> inner = {
      spec::real_conv(name + ".conv1", in, ch, 3, stride, 1), spec::real_bn(name + ".bn1", ch),
      spec::real_relu(name + ".relu1"), spec::real_conv(name + ".conv2", ch, ch, 3, 1, 1),
      spec::real_bn(name + ".bn2", ch)};
  std::vector<LayerSpec> shortcut;
  if (stride != 1 || in != ch) {
    shortcut = {spec::real_conv(name + ".proj", in, ch, 1, stride, 0), spec::real_bn(name + ".proj_bn", ch)};
  }
  out.push_back(spec::skip(name, std::move(inner), std::move(shortcut)));
  out.push_back(spec::real_relu(name + ".relu"));
}

// Complex basic block: delta(shortcut(f) + norm(conv(delta(norm(conv(f)))))).
inline void complex_block(std::vector<LayerSpec>& out, const std::string& name, std::size_t in,
                          std::size_t ch, std::size_t stride, double c) {
  std::vector<LayerSpec> inner = {
      spec::conv_nobias(name + ".conv1", in, ch, 3, stride, 1), spec::complex_norm(name + ".norm1", ch),
      spec::delta_fixed(name + ".delta1", ch, c), spec::conv_nobias(name + ".conv2", ch, ch, 3, 1, 1),
      spec::complex_norm(name + ".norm2", ch)};
  std::vector<LayerSpec> shortcut;
  if (stride != 1 || in != ch) {
    shortcut = {spec::conv_nobias(name + ".proj", in, ch, 1, stride, 0), spec::complex_norm(name + ".proj_norm", ch)};
  }
  out.push_back(spec::skip(name, std::move(inner), std::move(shortcut)));
  out.push_back(spec::delta_fixed(name + ".delta", ch, c));
}

inline void resnet_g(std::vector<LayerSpec>& g, std::size_t n, bool head) {
  g = {spec::real_conv("g.stem", 3, 16, 3, 1, 1), spec::real_bn("g.stem_bn", 16), spec::real_relu("g.stem_relu")};
  for (std::size_t i = 0; i < n; ++i) real_block(g, "g.s1b" + std::to_string(i), 16, 16, 1);
  if (head) g.push_back(generator_head("g.head", 16));
}

inline void resnet_d(std::vector<LayerSpec>& d, std::size_t n, const std::string& split,
                     std::size_t classes) {
  if (split == "alpha") {
    for (std::size_t i = 1; i < n; ++i) real_block(d, "d.s3b" + std::to_string(i), 64, 64, 1);
  } else if (n > 1) {
    real_block(d, "d.s3b" + std::to_string(n - 1), 64, 64, 1);
  }
  d.push_back(spec::avgpool("d.pool", 8, 8));
  d.push_back(spec::real_fc("d.fc", 64, classes));
  d.push_back(spec::softmax("d.softmax"));
}

}  // namespace detail

/// Throws CertificationError unless every phi layer is a certified kind.
inline void require_certified(const NetworkDivision& div) {
  if (!div.complex_phi()) return;
  for (const auto& s : div.phi_layers) {
    if (!is_certified(s)) {
      throw CertificationError("layer '" + s.name + "' (" + to_string(s.kind) +
                               ") is not phase-equivariant and cannot be placed in the processing module");
    }
  }
}

inline void validate(const NetworkDivision& div) {
  if (div.classes < 2) throw Error("need at least two classes");
  require_certified(div);
  const Shape out = div.output_shape();
  if (numel_of(out) != div.classes) {
    throw ShapeError(div.arch + ": decoder output " + to_string(out) + " does not match " +
                     std::to_string(div.classes) + " classes");
  }
  std::set<std::string> names;
  std::function<void(const std::vector<LayerSpec>&)> walk = [&](const std::vector<LayerSpec>& ls) {
    for (const auto& s : ls) {
      if (!names.insert(s.name).second) throw Error("duplicate layer name '" + s.name + "'");
      walk(s.inner);
      walk(s.shortcut);
    }
  };
  walk(div.g_layers);
  walk(div.phi_layers);
  walk(div.d_layers);
}

inline NetworkDivision build(const std::string& arch_name, const BuildOptions& o = {}) {
  const ArchId arch = parse_arch(arch_name);
  if (o.classes < 2) throw Error("need at least two classes");
  NetworkDivision div;
  div.arch = arch.name();
  div.variant = Variant::complex;
  div.classes = o.classes;
  div.input_shape = o.input_shape;
  if (arch.family == "lenet") {
    div.g_layers = detail::lenet_g(true);
    div.phi_layers = detail::lenet_phi_complex(o);
    div.d_layers = {spec::softmax("d.softmax")};
  } else {
    const std::size_t n = (arch.depth - 2) / 6;
    detail::resnet_g(div.g_layers, n, true);
    for (std::size_t i = 0; i < n; ++i) {
      detail::complex_block(div.phi_layers, "phi.s2b" + std::to_string(i), i == 0 ? 16 : 32, 32,
                            i == 0 ? 2 : 1, o.delta_c);
    }
    detail::complex_block(div.phi_layers, "phi.s3b0", 32, 64, 2, o.delta_c);
    detail::resnet_d(div.d_layers, n, arch.split, o.classes);
  }
  validate(div);
  return div;
}

/// Real-valued reference networks with the same layer budget.
inline NetworkDivision build_baseline(const std::string& arch_name, Variant variant,
                                      const BuildOptions& o = {}, double gamma = 0.0) {
  if (variant == Variant::complex) throw Error("build_baseline: use build() for the complex pipeline");
  if (gamma < 0) throw Error("noise level must be non-negative");
  const ArchId arch = parse_arch(arch_name);
  NetworkDivision div;
  div.arch = arch.name();
  div.variant = variant;
  div.classes = o.classes;
  div.input_shape = o.input_shape;
  div.gamma = variant == Variant::noisy ? gamma : 0.0;
  const bool head = variant == Variant::additional_layers;
  if (arch.family == "lenet") {
    div.g_layers = detail::lenet_g(head);
    div.phi_layers = detail::lenet_phi_real(o);
    div.d_layers = {spec::softmax("d.softmax")};
  } else {
    const std::size_t n = (arch.depth - 2) / 6;
    detail::resnet_g(div.g_layers, n, head);
    for (std::size_t i = 0; i < n; ++i)
      detail::real_block(div.phi_layers, "phi.s2b" + std::to_string(i), i == 0 ? 16 : 32, 32, i == 0 ? 2 : 1);
    detail::real_block(div.phi_layers, "phi.s3b0", 32, 64, 2);
    detail::resnet_d(div.d_layers, n, arch.split, o.classes);
  }
  validate(div);
  return div;
}

// ---------------------------------------------------------------------------
// Runtime network

template <typename T>
class Network {
 public:
  Network(NetworkDivision div, std::uint64_t seed) : div_(std::move(div)) {
    validate(div_);
    Rng root(seed);
    Rng rg = root.fork(1), rp = root.fork(2), rd = root.fork(3);
    g_ = Sequential<T>(div_.g_layers, rg);
    phi_ = Sequential<T>(div_.phi_layers, rp);
    d_ = Sequential<T>(div_.d_layers, rd);
    logit_layers_ = d_.size();
    if (logit_layers_ > 0 && div_.d_layers.back().kind == LayerKind::softmax) --logit_layers_;
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkDivision& division() const { return div_; }
  const Sequential<T>& g() const { return g_; }
  const Sequential<T>& phi() const { return phi_; }
  const Sequential<T>& d() const { return d_; }

  std::vector<Parameter<T>*> parameters() const {
    std::vector<Parameter<T>*> out;
    g_.collect(out);
    phi_.collect(out);
    d_.collect(out);
    return out;
  }
  std::vector<Parameter<T>*> trainable_parameters() const {
    auto all = parameters();
    std::erase_if(all, [](const Parameter<T>* p) { return !p->trainable; });
    return all;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : trainable_parameters()) n += p->value.numel();
    return n;
  }

  Var<T> encode(const Var<T>& images, Context<T>& ctx) const { return g_.forward(images, ctx); }
  Var<T> process(const Var<T>& x, Context<T>& ctx) const { return phi_.forward(x, ctx); }

  /// Decoder up to (not including) a trailing softmax, flattened to (n, classes).
  Var<T> decode_logits(const Var<T>& f, Context<T>& ctx) const {
    Var<T> y = d_.forward_prefix(f, ctx, logit_layers_);
    return ag::reshape(y, {y.shape()[0], div_.classes});
  }

 private:
  NetworkDivision div_;
  Sequential<T> g_, phi_, d_;
  std::size_t logit_layers_ = 0;
};

/// Logits of the network with no secret applied: the real baselines run end
/// to end; the complex pipeline runs on a + 0i with theta = 0. Eval mode.
/// Noise of the noisy variant is not applied here.
template <typename T>
Tensor<T> forward_plain(const Network<T>& net, const Tensor<T>& images) {
  const Shape& in = net.division().input_shape;
  if (images.rank() != 4 || Shape(images.shape().begin() + 1, images.shape().end()) != in) {
    throw ShapeError("forward_plain: images " + to_string(images.shape()) + " do not match input " + to_string(in));
  }
  Tape<T> t;
  Context<T> ctx;
  Var<T> a = net.encode(t.constant(images), ctx);
  if (net.division().complex_phi()) {
    Var<T> h = net.process(ag::make_complex(a, t.constant(Tensor<T>(a.shape()))), ctx);
    return net.decode_logits(ag::real_part(h), ctx).re();
  }
  return net.decode_logits(net.process(a, ctx), ctx).re();
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  Tape<T> t;
  return layers::softmax(t.constant(logits)).re();
}

// ---------------------------------------------------------------------------
// Critic

/// Real critic: conv 3x3 stride 2 + relu + fc to one score.
template <typename T>
class Discriminator {
 public:
  static constexpr std::size_t kWidth = 8;

  Discriminator(const Shape& feature_shape, std::uint64_t seed, std::string prefix = "D")
      : feature_shape_(feature_shape) {
    if (feature_shape.size() != 3) throw ShapeError("discriminator expects a (c, h, w) feature shape");
    const std::size_t oh = (feature_shape[1] - 1) / 2 + 1, ow = (feature_shape[2] - 1) / 2 + 1;
    specs_ = {spec::real_conv(prefix + ".conv", feature_shape[0], kWidth, 3, 2, 1),
              spec::real_relu(prefix + ".relu"), spec::real_fc(prefix + ".fc", kWidth * oh * ow, 1)};
    Rng rng(seed);
    net_ = Sequential<T>(specs_, rng);
  }

  const Shape& feature_shape() const { return feature_shape_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::vector<Parameter<T>*> parameters() const { return net_.parameters(); }

  /// Scores, shape (n). With `frozen` the weights enter the tape as
  /// constants so no gradient reaches them.
  Var<T> score(const Var<T>& features, bool frozen = false) const {
    Context<T> ctx;
    Var<T> y;
    if (frozen) {
      Tape<T>& t = features.tape();
      std::vector<Parameter<T>*> ps = net_.parameters();
      // conv weight, conv bias, fc weight, fc bias
      Var<T> cb = t.constant(ps[1]->value);
      Var<T> h = ag::relu(ag::conv2d(features, t.constant(ps[0]->value), &cb, 2, 1));
      Var<T> fb = t.constant(ps[3]->value);
      y = ag::linear(h, t.constant(ps[2]->value), &fb);
    } else {
      y = net_.forward(features, ctx);
    }
    return ag::reshape(y, {features.shape()[0]});
  }

  void clip(double c) {
    if (!(c > 0)) throw Error("clip bound must be positive");
    const T lo = static_cast<T>(-c), hi = static_cast<T>(c);
    for (auto* p : net_.parameters()) {
      for (auto& v : p->value.data()) v = std::clamp(v, lo, hi);
      p->touch();
    }
  }

  T max_abs_weight() const {
    T m{0};
    for (auto* p : net_.parameters()) m = std::max(m, max_abs(p->value));
    return m;
  }

 private:
  Shape feature_shape_;
  std::vector<LayerSpec> specs_;
  Sequential<T> net_;
};

}  // namespace phasefort

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

// Model-inversion attacks against a frozen victim.
//
// Strategy 1 (phase search): a critic D' learns to tell genuine features a
// from wrong-phase decryptions; the attacker then takes
// theta_hat = argmax_theta D'(Re[x exp(-i theta)]) over a grid and decodes
// Re[x exp(-i theta_hat)] with a decoder trained on (a, I).
//
// Strategy 2 (direct): a decoder is trained on (x, I) treating the real and
// imaginary planes of x as 2K ordinary channels.
//
// The attacker only ever handles `AttackPairs`, which carry no secrets; the
// harness in run_attack keeps the phases aside to score the estimates.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "phasefort/adversarial.hpp"
#include "phasefort/metrics.hpp"

namespace phasefort {

enum class PairMode { plaintext, encrypted, repeat_query };
enum class Strategy { phase_search = 1, direct = 2 };

inline std::string to_string(PairMode m) {
  switch (m) {
    case PairMode::plaintext: return "plaintext";
    case PairMode::encrypted: return "encrypted";
    case PairMode::repeat_query: return "repeat-query";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "1" || s == "phase-search") return Strategy::phase_search;
  if (s == "2" || s == "direct") return Strategy::direct;
  throw Error("unknown attack strategy '" + s + "' (expected 1 or 2)");
}

inline int strategy_number(Strategy s) { return static_cast<int>(s); }

/// Stacks the planes of a complex (n, K, h, w) tensor into a real
/// (n, 2K, h, w) one: channels [0, K) real, [K, 2K) imaginary.
template <typename T>
Tensor<T> stack_planes(const ComplexTensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("stack_planes expects (n, c, h, w)");
  const std::size_t n = s[0], plane = s[1] * s[2] * s[3];
  Tensor<T> out({n, 2 * s[1], s[2], s[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.re.raw() + i * plane, plane, out.raw() + 2 * i * plane);
    std::copy_n(x.im.raw() + i * plane, plane, out.raw() + (2 * i + 1) * plane);
  }
  return out;
}

template <typename T>
ComplexTensor<T> split_planes(const Tensor<T>& stacked) {
  const Shape& s = stacked.shape();
  if (s.size() != 4 || s[1] % 2 != 0) throw ShapeError("split_planes expects an even channel count");
  const std::size_t n = s[0], plane = s[1] / 2 * s[2] * s[3];
  Shape hs{n, s[1] / 2, s[2], s[3]};
  ComplexTensor<T> x{Tensor<T>(hs), Tensor<T>(hs)};
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(stacked.raw() + 2 * i * plane, plane, x.re.raw() + i * plane);
    std::copy_n(stacked.raw() + (2 * i + 1) * plane, plane, x.im.raw() + i * plane);
  }
  return x;
}

/// Attacker-visible training/test material: released features and the
/// images they came from. Encrypted features are stored as stacked planes.
template <typename T>
struct AttackPairs {
  PairMode mode = PairMode::plaintext;
  Tensor<T> features;
  Tensor<T> images;
  std::vector<std::size_t> source;  // dataset index of each image

  std::size_t size() const { return source.size(); }
  bool complex_features() const { return mode != PairMode::plaintext; }
  ComplexTensor<T> encrypted() const {
    if (!complex_features()) throw Error("plaintext pairs carry no complex feature");
    return split_planes(features);
  }
};

namespace attack_detail {

// Releases one batch; the returned secrets never leave the harness.
template <typename T>
std::pair<Tensor<T>, std::vector<SecretRecord>> release(const Network<T>& victim, const Tensor<T>& images,
                                                        PairMode mode, Rng& rng) {
  const auto& div = victim.division();
  Tape<T> tape;
  Context<T> ctx;
  Tensor<T> a = victim.encode(tape.constant(images), ctx).re();
  if (div.variant == Variant::noisy) a = noisy_feature(a, div.gamma, rng);
  if (mode == PairMode::plaintext) return {std::move(a), {}};
  std::vector<SecretRecord> secrets(a.dim(0));
  if (!div.complex_phi()) {
    // unprotected pipeline seen through the same interface: theta = 0, b = 0
    for (std::size_t i = 0; i < secrets.size(); ++i) secrets[i] = {0.0, i};
    return {stack_planes(ComplexTensor<T>(a, Tensor<T>(a.shape()))), std::move(secrets)};
  }
  std::vector<std::size_t> partners(a.dim(0));
  std::vector<double> theta(a.dim(0));
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    partners[i] = choose_partner(a.dim(0), i, rng);
    theta[i] = sample_phase(rng);
    secrets[i] = {theta[i], partners[i]};
  }
  const Tensor<T> b = gather_batch(a, std::span<const std::size_t>(partners));
  return {stack_planes(encrypt(a, b, std::span<const double>(theta)).x), std::move(secrets)};
}

}  // namespace attack_detail

/// Pairs plus the secrets used to make them; only the harness sees this.
template <typename T>
struct LabelledRelease {
  AttackPairs<T> pairs;
  std::vector<SecretRecord> secrets;  // empty for plaintext
};

/// Runs the victim's client side over `data` `repeats` times (fresh phase
/// and partner per query; partners come from a shuffled batch).
template <typename T>
LabelledRelease<T> release_with_secrets(const Network<T>& victim, const Dataset& data, PairMode mode, Rng& rng,
                                        std::size_t repeats = 1, std::size_t batch = 64) {
  if (repeats == 0) throw Error("repeat count must be positive");
  if (mode == PairMode::repeat_query && repeats < 2) throw Error("repeat-query mode needs at least two repeats");
  if (mode == PairMode::plaintext && repeats != 1) throw Error("plaintext pairs are deterministic; use one repeat");
  if (data.size() < 2) throw Error("need at least two images");
  batch = std::max<std::size_t>(batch, 2);
  LabelledRelease<T> out;
  out.pairs.mode = mode;
  std::vector<Tensor<T>> feats, imgs;
  for (std::size_t r = 0; r < repeats; ++r) {
    const std::vector<std::size_t> order = permutation(data.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      // a lone trailing image is released together with its predecessor
      const std::size_t first = end - start < 2 ? start - 1 : start;
      std::span<const std::size_t> idx(order.data() + first, end - first);
      const Tensor<T> images = data.batch<T>(idx);
      auto [f, secrets] = attack_detail::release(victim, images, mode, rng);
      for (auto& s : secrets) s.fooling_index = idx[s.fooling_index];
      const std::size_t skip = start - first;
      feats.push_back(f.slice_batch(skip, f.dim(0)));
      imgs.push_back(images.slice_batch(skip, images.dim(0)));
      out.pairs.source.insert(out.pairs.source.end(), idx.begin() + static_cast<std::ptrdiff_t>(skip), idx.end());
      out.secrets.insert(out.secrets.end(), secrets.begin() + static_cast<std::ptrdiff_t>(std::min(skip, secrets.size())),
                         secrets.end());
    }
  }
  out.pairs.features = concat_batch(std::span<const Tensor<T>>(feats));
  out.pairs.images = concat_batch(std::span<const Tensor<T>>(imgs));
  return out;
}

/// Attacker-visible pairs only.
template <typename T>
AttackPairs<T> collect_pairs(const Network<T>& victim, const Dataset& data, PairMode mode, Rng& rng,
                             std::size_t repeats = 1) {
  if (mode == PairMode::repeat_query && repeats < 2) repeats = 5;
  return release_with_secrets(victim, data, mode, rng, repeats).pairs;
}

// ---------------------------------------------------------------------------
// Decoder

struct DecoderOptions {
  std::size_t width = 16;
  std::size_t levels = 4;
  std::size_t out_channels = 3;
  std::size_t out_size = 32;
};

/// U-shaped encoder/decoder: `levels` resolutions, two 3x3 conv + ReLU per
/// block, max-pool down, nearest-neighbour up, skip concatenation between
/// mirrored resolutions, sigmoid output. Inputs of any spatial size are
/// first centred on an out_size x out_size canvas.
template <typename T>
class Decoder {
 public:
  Decoder(std::size_t in_channels, DecoderOptions opts, std::uint64_t seed)
      : in_channels_(in_channels), opts_(opts) {
    if (in_channels == 0 || opts.width == 0) throw Error("decoder needs positive channel counts");
    if (opts.levels < 1 || opts.out_size % (std::size_t{1} << (opts.levels - 1)) != 0) {
      throw Error("decoder output size must be divisible by 2^(levels-1)");
    }
    Rng rng(seed);
    std::size_t prev = in_channels;
    for (std::size_t l = 0; l < opts.levels; ++l) {
      const std::size_t ch = opts.width << l;
      add_conv("dec.down" + std::to_string(l) + ".a", prev, ch, 3, rng);
      add_conv("dec.down" + std::to_string(l) + ".b", ch, ch, 3, rng);
      prev = ch;
    }
    for (std::size_t l = opts.levels - 1; l-- > 0;) {
      const std::size_t ch = opts.width << l;
      add_conv("dec.up" + std::to_string(l) + ".a", prev + ch, ch, 3, rng);
      add_conv("dec.up" + std::to_string(l) + ".b", ch, ch, 3, rng);
      prev = ch;
    }
    add_conv("dec.out", prev, opts.out_channels, 1, rng, 1.0);
  }

  std::size_t in_channels() const { return in_channels_; }
  const DecoderOptions& options() const { return opts_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  Var<T> forward(const Var<T>& features) const {
    if (features.is_complex()) throw Error("decoder expects real (stacked) features");
    if (features.shape().size() != 4 || features.shape()[1] != in_channels_) {
      throw ShapeError("decoder expects " + std::to_string(in_channels_) + " input channels, got " +
                       to_string(features.shape()));
    }
    Tape<T>& t = features.tape();
    std::size_t k = 0;
    auto conv = [&](const Var<T>& x, bool relu) {
      const std::size_t pad = params_[k]->value.dim(2) / 2;
      Var<T> w = t.param(*params_[k]);
      Var<T> b = t.param(*params_[k + 1]);
      k += 2;
      Var<T> y = ag::conv2d(x, w, &b, 1, pad);
      return relu ? ag::relu(y) : y;
    };
    Var<T> h = ag::fit_spatial(features, opts_.out_size, opts_.out_size);
    std::vector<Var<T>> skips;
    for (std::size_t l = 0; l < opts_.levels; ++l) {
      if (l > 0) h = ag::max_pool(h, 2, 2);
      h = conv(conv(h, true), true);
      skips.push_back(h);
    }
    for (std::size_t l = opts_.levels - 1; l-- > 0;) {
      h = ag::concat_channels(ag::upsample2x(h), skips[l]);
      h = conv(conv(h, true), true);
    }
    return ag::sigmoid(conv(h, false));
  }

  /// Batched inference, values in [0, 1].
  Tensor<T> reconstruct(const Tensor<T>& features, std::size_t batch = 64) const {
    if (!trained_) throw Error("decoder has not been trained");
    std::vector<Tensor<T>> parts;
    for (std::size_t s = 0; s < features.dim(0); s += batch) {
      Tape<T> t;
      Tensor<T> y = forward(t.constant(features.slice_batch(s, std::min(features.dim(0), s + batch)))).re();
      for (auto& v : y.data()) v = std::clamp(v, T{0}, T{1});
      parts.push_back(std::move(y));
    }
    return concat_batch(std::span<const Tensor<T>>(parts));
  }

 private:
  void add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, Rng& rng,
                double gain = 2.0) {
    params_.push_back(std::make_unique<Parameter<T>>(
        name + ".weight", layers::kaiming<T>(rng, {out, in, k, k}, in * k * k, gain)));
    params_.push_back(std::make_unique<Parameter<T>>(name + ".bias", Tensor<T>({out})));
  }

  std::size_t in_channels_;
  DecoderOptions opts_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  bool trained_ = false;
};

struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 1e-3;
};

/// Mean-squared-error training with Adam; returns the last epoch's mean loss.
template <typename T>
double train_decoder(Decoder<T>& dec, const Tensor<T>& features, const Tensor<T>& images, const FitOptions& o,
                     Rng& rng) {
  if (features.dim(0) == 0) throw Error("no training pairs for the decoder");
  if (features.dim(0) != images.dim(0)) throw ShapeError("feature/image count mismatch");
  Adam<T> opt(dec.parameters(), o.lr);
  double last = 0;
  for (std::size_t e = 0; e < o.epochs; ++e) {
    const auto order = permutation(features.dim(0), rng);
    long double sum = 0;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < order.size(); s += o.batch_size) {
      std::span<const std::size_t> idx(order.data() + s, std::min(order.size(), s + o.batch_size) - s);
      Tape<T> t;
      Var<T> loss = ag::mse(dec.forward(t.constant(gather_batch(features, idx))), gather_batch(images, idx));
      sum += loss.re()[0];
      ++batches;
      opt.zero_grad();
      t.backward(loss);
      opt.step();
    }
    last = static_cast<double>(sum / static_cast<long double>(batches));
  }
  dec.mark_trained();
  return last;
}

// ---------------------------------------------------------------------------
// Phase estimation

/// Scores a batch of candidate real features (one score per sample).
template <typename T>
using PhaseScorer = std::function<std::vector<double>(const Tensor<T>&)>;

/// Re[x exp(-i theta)] = x.re cos(theta) + x.im sin(theta) for each grid angle,
/// stacked along the batch axis. `x` is one sample, (K, h, w) or (1, K, h, w).
template <typename T>
Tensor<T> candidate_batch(const ComplexTensor<T>& x, std::span<const double> angles) {
  Shape s = x.shape();
  if (s.size() == 4) {
    if (s[0] != 1) throw ShapeError("candidate_batch expects a single sample");
    s.erase(s.begin());
  }
  const std::size_t m = x.re.numel();
  Shape out{angles.size()};
  out.insert(out.end(), s.begin(), s.end());
  Tensor<T> c(out);
  for (std::size_t j = 0; j < angles.size(); ++j) {
    const T co = static_cast<T>(std::cos(angles[j])), si = static_cast<T>(std::sin(angles[j]));
    for (std::size_t i = 0; i < m; ++i) c[j * m + i] = x.re[i] * co + x.im[i] * si;
  }
  return c;
}

/// argmax over an m-point grid 2 pi j / m (first point wins ties), then one
/// halving step: the two neighbours at +-pi/m replace the estimate only if
/// they score strictly higher. Result in [0, 2 pi).
template <typename T>
double estimate_phase(const ComplexTensor<T>& x, const PhaseScorer<T>& scorer, std::size_t m = 64,
                      bool refine = true) {
  if (m < 8) throw Error("phase grid needs at least 8 points");
  std::vector<double> grid(m);
  for (std::size_t j = 0; j < m; ++j) grid[j] = kTwoPi * static_cast<double>(j) / static_cast<double>(m);
  const std::vector<double> scores = scorer(candidate_batch(x, std::span<const double>(grid)));
  if (scores.size() != m) throw ShapeError("scorer returned the wrong number of scores");
  std::size_t best = 0;
  for (std::size_t j = 1; j < m; ++j)
    if (scores[j] > scores[best]) best = j;
  double theta = grid[best];
  if (refine) {
    const double h = std::numbers::pi / static_cast<double>(m);
    const std::vector<double> around{theta - h, theta + h};
    const std::vector<double> s2 = scorer(candidate_batch(x, std::span<const double>(around)));
    double top = scores[best];
    for (std::size_t j = 0; j < 2; ++j)
      if (s2[j] > top) top = s2[j], theta = around[j];
  }
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0) theta += kTwoPi;
  return theta >= kTwoPi ? 0.0 : theta;
}

struct CriticFitOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double clip = 0.05;
};

/// The attacker's critic D' and its grid settings.
template <typename T>
class PhaseEstimator {
 public:
  PhaseEstimator(const Shape& feature_shape, std::uint64_t seed, std::size_t grid = 64, bool refine = true)
      : critic_(feature_shape, seed, "Dp"), grid_(grid), refine_(refine) {
    if (grid < 8) throw Error("phase grid needs at least 8 points");
  }

  Discriminator<T>& critic() { return critic_; }
  std::size_t grid() const { return grid_; }

  PhaseScorer<T> scorer() const {
    return [this](const Tensor<T>& c) {
      Tape<T> t;
      const Tensor<T> s = critic_.score(t.constant(c), true).re();
      return std::vector<double>(s.data().begin(), s.data().end());
    };
  }

  double estimate(const ComplexTensor<T>& x) const { return estimate_phase(x, scorer(), grid_, refine_); }

  /// Minimises E[D'(a')] - E[D'(a)], a' = Re[x exp(-i psi)] with random psi.
  double fit(const Tensor<T>& genuine, const ComplexTensor<T>& encrypted, const CriticFitOptions& o, Rng& rng) {
    if (genuine.dim(0) == 0 || encrypted.re.dim(0) == 0) throw Error("no pairs for the phase critic");
    RmsProp<T> opt(critic_.parameters(), o.lr);
    critic_.clip(o.clip);
    const std::size_t n = std::min(genuine.dim(0), encrypted.re.dim(0));
    const std::size_t per = encrypted.re.numel() / encrypted.re.dim(0);
    double last = 0;
    for (std::size_t e = 0; e < o.epochs; ++e) {
      const auto order = permutation(n, rng);
      long double sum = 0;
      std::size_t batches = 0;
      for (std::size_t s = 0; s < n; s += o.batch_size) {
        std::span<const std::size_t> idx(order.data() + s, std::min(n, s + o.batch_size) - s);
        const Tensor<T> real = gather_batch(genuine, idx);
        Tensor<T> fake(real.shape());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          const double psi = sample_phase(rng);
          const T co = static_cast<T>(std::cos(psi)), si = static_cast<T>(std::sin(psi));
          const T* xr = encrypted.re.raw() + idx[i] * per;
          const T* xi = encrypted.im.raw() + idx[i] * per;
          for (std::size_t k = 0; k < per; ++k) fake[i * per + k] = xr[k] * co + xi[k] * si;
        }
        Tape<T> t;
        const std::size_t b = idx.size();
        Var<T> scores = critic_.score(ag::concat_batch(std::vector<Var<T>>{t.constant(real), t.constant(fake)}));
        Tensor<T> w({2 * b});
        for (std::size_t i = 0; i < b; ++i) w[i] = static_cast<T>(-1.0 / static_cast<double>(b));
        for (std::size_t i = b; i < 2 * b; ++i) w[i] = static_cast<T>(1.0 / static_cast<double>(b));
        Var<T> loss = ag::weighted_sum(scores, w);
        sum += loss.re()[0];
        ++batches;
        opt.zero_grad();
        t.backward(loss);
        opt.step();
        critic_.clip(o.clip);
      }
      last = static_cast<double>(sum / static_cast<long double>(batches));
    }
    return last;
  }

 private:
  Discriminator<T> critic_;
  std::size_t grid_;
  bool refine_;
};

// ---------------------------------------------------------------------------
// Harness

struct AttackOptions {
  Strategy strategy = Strategy::direct;
  DecoderOptions decoder;
  FitOptions fit;
  CriticFitOptions critic;
  std::size_t grid = 64;
  bool refine = true;
  std::size_t repeats = 1;  // encryptions of each training image
};

struct AttackReport {
  Strategy strategy = Strategy::direct;
  std::string victim;
  double reconstruction_error = 0.0;
  std::optional<double> angle_error;  // strategy 1 only
  std::size_t n_samples = 0;
  double decoder_train_loss = 0.0;

  static std::string csv_header() { return "strategy,victim,n_samples,reconstruction_error,angle_error"; }

  std::string csv_row() const {
    std::ostringstream o;
    o << std::setprecision(10) << strategy_number(strategy) << ',' << victim << ',' << n_samples << ','
      << reconstruction_error << ',';
    if (angle_error) o << *angle_error;
    return o.str();
  }

  std::string summary() const {
    std::ostringstream o;
    o << "strategy " << strategy_number(strategy) << " against " << victim << " on " << n_samples
      << " images\n  reconstruction error " << std::fixed << std::setprecision(4) << reconstruction_error << '\n';
    if (angle_error) o << "  angle error          " << *angle_error << " rad\n";
    return o.str();
  }

  bool operator==(const AttackReport&) const = default;
};

inline std::string victim_name(const NetworkDivision& div) {
  std::string s = div.arch + "/" + to_string(div.variant);
  if (div.variant == Variant::noisy) {
    std::ostringstream g;
    g << div.gamma;
    s += "(" + g.str() + ")";
  }
  return s;
}

/// Everything the attacker learned, kept so reconstructions can be exported.
template <typename T>
struct TrainedAttack {
  std::unique_ptr<Decoder<T>> decoder;
  std::unique_ptr<PhaseEstimator<T>> estimator;  // strategy 1 only
};

/// Attacker: learns from pairs released on the training set.
template <typename T>
TrainedAttack<T> train_attack(const AttackPairs<T>& genuine, const AttackPairs<T>& released, const AttackOptions& o,
                              std::uint64_t seed) {
  TrainedAttack<T> out;
  Rng rng(derive_seed(seed, 0xa77ac));
  if (released.size() == 0) throw Error("no training pairs");
  if (o.strategy == Strategy::direct) {
    out.decoder = std::make_unique<Decoder<T>>(released.features.dim(1), o.decoder, derive_seed(seed, 1));
    train_decoder(*out.decoder, released.features, released.images, o.fit, rng);
    return out;
  }
  if (genuine.mode != PairMode::plaintext) throw Error("strategy 1 learns from plaintext features");
  Shape fs(genuine.features.shape().begin() + 1, genuine.features.shape().end());
  out.estimator = std::make_unique<PhaseEstimator<T>>(fs, derive_seed(seed, 2), o.grid, o.refine);
  out.estimator->fit(genuine.features, released.encrypted(), o.critic, rng);
  out.decoder = std::make_unique<Decoder<T>>(fs[0], o.decoder, derive_seed(seed, 1));
  train_decoder(*out.decoder, genuine.features, genuine.images, o.fit, rng);
  return out;
}

/// Attacker at test time: reconstructions and, for strategy 1, phase guesses.
template <typename T>
std::pair<Tensor<T>, std::vector<double>> apply_attack(const TrainedAttack<T>& atk, const AttackPairs<T>& test) {
  if (!atk.decoder || !atk.decoder->trained()) throw Error("attack decoder has not been trained");
  if (!atk.estimator) return {atk.decoder->reconstruct(test.features), {}};
  const ComplexTensor<T> x = test.encrypted();
  const std::size_t n = x.re.dim(0);
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ComplexTensor<T> xi{x.re.slice_batch(i, i + 1), x.im.slice_batch(i, i + 1)};
    theta[i] = atk.estimator->estimate(xi);
  }
  const Tensor<T> guess = derotate_real(x, std::span<const double>(theta));
  return {atk.decoder->reconstruct(guess), theta};
}

/// Strategy 1 without the image decoder: fits D' on `train`, then returns
/// the mean circular error of the recovered phases on `test`.
template <typename T>
double phase_attack_error(const Network<T>& victim, const Dataset& train, const Dataset& test,
                          const AttackOptions& o, std::uint64_t seed) {
  if (!victim.division().complex_phi()) throw Error("phase estimation needs a complex victim");
  Rng rng(derive_seed(seed, 0x7068));
  const AttackPairs<T> genuine = collect_pairs(victim, train, PairMode::plaintext, rng);
  const AttackPairs<T> released = release_with_secrets(victim, train, PairMode::encrypted, rng, o.repeats).pairs;
  Shape fs(genuine.features.shape().begin() + 1, genuine.features.shape().end());
  PhaseEstimator<T> est(fs, derive_seed(seed, 2), o.grid, o.refine);
  Rng fit_rng(derive_seed(seed, 0xa77ac));
  est.fit(genuine.features, released.encrypted(), o.critic, fit_rng);

  const LabelledRelease<T> held_out = release_with_secrets(victim, test, PairMode::encrypted, rng);
  const ComplexTensor<T> x = held_out.pairs.encrypted();
  long double s = 0;
  for (std::size_t i = 0; i < x.re.dim(0); ++i) {
    const ComplexTensor<T> xi{x.re.slice_batch(i, i + 1), x.im.slice_batch(i, i + 1)};
    s += angle_error(held_out.secrets[i].theta, est.estimate(xi));
  }
  return static_cast<double>(s / static_cast<long double>(x.re.dim(0)));
}

/// Full evaluation: release, train the attacker on `train`, score on `test`.
template <typename T>
AttackReport run_attack(const Network<T>& victim, const Dataset& train, const Dataset& test, const AttackOptions& o,
                        std::uint64_t seed, TrainedAttack<T>* keep = nullptr, Tensor<T>* recon = nullptr) {
  Rng rng(derive_seed(seed, 0x6e75));
  const bool complex_victim = victim.division().complex_phi();
  // what the server sees: x for the complex pipeline, the (noisy) feature otherwise
  const PairMode seen = o.strategy == Strategy::phase_search || complex_victim
                            ? (o.repeats > 1 ? PairMode::repeat_query : PairMode::encrypted)
                            : PairMode::plaintext;
  const PairMode seen_test = seen == PairMode::plaintext ? PairMode::plaintext : PairMode::encrypted;
  AttackPairs<T> genuine;
  if (o.strategy == Strategy::phase_search) genuine = collect_pairs(victim, train, PairMode::plaintext, rng);
  const AttackPairs<T> released =
      release_with_secrets(victim, train, seen, rng, seen == PairMode::plaintext ? 1 : o.repeats).pairs;
  TrainedAttack<T> atk = train_attack(genuine, released, o, seed);
  const LabelledRelease<T> held_out = release_with_secrets(victim, test, seen_test, rng);

  auto [images_hat, theta_hat] = apply_attack(atk, held_out.pairs);
  AttackReport rep;
  rep.strategy = o.strategy;
  rep.victim = victim_name(victim.division());
  rep.n_samples = held_out.pairs.size();
  rep.reconstruction_error = reconstruction_error(images_hat, held_out.pairs.images);
  if (o.strategy == Strategy::phase_search) {
    long double s = 0;
    for (std::size_t i = 0; i < theta_hat.size(); ++i) s += angle_error(held_out.secrets[i].theta, theta_hat[i]);
    rep.angle_error = static_cast<double>(s / static_cast<long double>(theta_hat.size()));
  }
  if (recon) {
    // reorder to dataset order for side-by-side export
    Tensor<T> ordered(images_hat.shape());
    const std::size_t per = images_hat.numel() / std::max<std::size_t>(1, images_hat.dim(0));
    for (std::size_t i = 0; i < held_out.pairs.size(); ++i)
      std::copy_n(images_hat.raw() + i * per, per, ordered.raw() + held_out.pairs.source[i] * per);
    *recon = std::move(ordered);
  }
  if (keep) *keep = std::move(atk);
  return rep;
}

}  // namespace phasefort

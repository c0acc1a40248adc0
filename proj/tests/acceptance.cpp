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

// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if
// every selected criterion passes. Pass criterion numbers as arguments to
// run a subset, e.g. `acceptance 1 2 3`.
//
// All thresholds and budgets are fixed below; nothing is tuned at run time.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phasefort/experiment.hpp"

namespace pf = phasefort;
namespace ag = phasefort::ag;
namespace fs = std::filesystem;
using pf::ComplexTensor;
using pf::GradInput;
using pf::Tape;
using pf::Tensor;
using pf::Var;

namespace {

// ---- pinned tolerances -----------------------------------------------------

constexpr double kEquivTolF64 = 1e-10;
constexpr double kEquivTolF32 = 1e-5;
constexpr std::size_t kEquivTrials = 100;
constexpr double kInvarianceTol = 1e-4;
constexpr std::size_t kInvarianceThetas = 16;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kLossOracleTol = 1e-6;
constexpr std::size_t kLossBatches = 20;
constexpr double kUtilityGap = 5.0;     // percentage points
constexpr double kReconRatio = 2.0;
constexpr double kMinAngleError = 0.5;  // rad

// ---- pinned experiment budgets ---------------------------------------------

constexpr std::size_t kTrainSize = 1000;
constexpr std::size_t kTestSize = 300;
constexpr std::size_t kEpochs = 10;
constexpr std::size_t kPrivacySeeds = 3;   // criteria 6 and 8
constexpr std::size_t kPhaseSeeds = 5;     // criterion 7
constexpr std::size_t kAttackEpochs = 10;
constexpr std::size_t kDecoderWidth = 16;
constexpr std::size_t kDecoderLevels = 2;
constexpr double kAttackLr = 1e-3;

// ---- output ----------------------------------------------------------------

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o << std::setprecision(precision) << v;
  return o.str();
}

std::string sci(double v) {
  std::ostringstream o;
  o << std::scientific << std::setprecision(2) << v;
  return o.str();
}

std::string join(const std::vector<double>& v, int precision = 4) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i], precision);
  return s;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---- criterion 1: equivariance ---------------------------------------------

std::vector<pf::LayerSpec> certified_kinds() {
  using namespace pf::spec;
  return {
      conv_nobias("conv", 3, 4, 3, 1, 1),
      conv_nobias("conv_stride2", 3, 4, 3, 2, 0),
      delta_fixed("delta_c", 3, 1.0),
      delta_channelwise("delta_ck", 3),
      complex_norm("norm", 3),
      mag_maxpool("mag_maxpool", 2, 2),
      avgpool("avgpool", 2, 2),
      complex_dropout("dropout", 0.3),
      skip("skip", {conv_nobias("a", 3, 3, 3, 1, 1), delta_fixed("d", 3, 1.0), conv_nobias("b", 3, 3, 3, 1, 1)}),
      skip("skip_proj", {conv_nobias("a", 3, 5, 3, 2, 1), complex_norm("n", 5)}, {conv_nobias("p", 3, 5, 1, 2, 0)}),
  };
}

template <typename T>
double worst_kind_residual(double tol, std::string& worst, bool& pass) {
  pf::Rng rng(101);
  double m = 0;
  for (const auto& s : certified_kinds()) {
    pf::Sequential<T> seq({s}, rng);
    for (bool training : {false, true}) {
      const auto r = pf::certify_equivariance<T>(seq, {4, 3, 8, 8}, kEquivTrials, tol, rng, training);
      pass = pass && r.pass;
      if (r.max_residual >= m) {
        m = r.max_residual;
        worst = s.name;
      }
    }
  }
  return m;
}

template <typename T>
double phi_residual(const std::string& arch, double tol, bool& pass) {
  pf::Network<T> net(pf::build(arch), 7);
  pf::Shape shape = net.division().feature_shape();
  shape.insert(shape.begin(), 2);
  pf::Rng rng(202);
  const auto r = pf::certify_equivariance(net.phi(), shape, kEquivTrials, tol, rng);
  pass = pass && r.pass;
  return r.max_residual;
}

Outcome criterion_equivariance() {
  bool pass = true;
  std::string w64, w32;
  const double k64 = worst_kind_residual<double>(kEquivTolF64, w64, pass);
  const double k32 = worst_kind_residual<float>(kEquivTolF32, w32, pass);
  std::string detail = "layer kinds f64 " + sci(k64) + " (" + w64 + "), f32 " + sci(k32) + " (" + w32 + ")";
  for (const std::string arch : {"lenet", "resnet20-alpha", "resnet20-beta"}) {
    const double r64 = phi_residual<double>(arch, kEquivTolF64, pass);
    const double r32 = phi_residual<float>(arch, kEquivTolF32, pass);
    detail += "; " + arch + " f64 " + sci(r64) + " f32 " + sci(r32);
  }
  return {pass, detail};
}

// ---- criterion 2: phase invariance of honest inference -----------------------

Outcome criterion_invariance() {
  bool pass = true;
  double worst = 0;
  std::string worst_arch;
  const auto images = pf::synth_dataset(10, 10, 32, 303).images.slice_batch(0, 2);
  for (const auto& arch : pf::shipped_archs()) {
    pf::Network<float> net(pf::build(arch), 9);
    pf::Rng rng(pf::derive_seed(404, std::hash<std::string>{}(arch)));
    const std::vector<std::size_t> partners{1, 0};
    const auto ref = pf::secure_logits(net, images, {0.0, 0.0}, partners);
    const double scale = std::max(static_cast<double>(pf::max_abs(ref)), 1e-12);
    for (std::size_t i = 0; i < kInvarianceThetas; ++i) {
      const std::vector<double> theta{pf::sample_phase(rng), pf::sample_phase(rng)};
      const auto l = pf::secure_logits(net, images, theta, partners);
      const double rel = static_cast<double>(pf::max_abs(l - ref)) / scale;
      if (rel >= worst) worst = rel, worst_arch = arch;
      pass = pass && rel < kInvarianceTol;
    }
  }
  return {pass, std::to_string(pf::shipped_archs().size()) + " archs x " + std::to_string(kInvarianceThetas) +
                    " phases, worst relative deviation " + sci(worst) + " (" + worst_arch + ")"};
}

// ---- criterion 3: gradients ----------------------------------------------------

using D = double;

struct Projector {
  Tensor<D> wre, wim;
  Projector(pf::Rng& rng, const pf::Shape& s, bool cx)
      : wre(pf::sample_gaussian<D>(rng, s)), wim(cx ? pf::sample_gaussian<D>(rng, s) : Tensor<D>()) {}
  Var<D> operator()(const Var<D>& y) const { return ag::weighted_sum(y, wre, wim); }
};

GradInput<D> complex_input(pf::Rng& rng, const pf::Shape& s) {
  auto z = pf::sample_complex_gaussian<D>(rng, s);
  return {z.re, z.im};
}

GradInput<D> real_input(pf::Rng& rng, const pf::Shape& s) { return {pf::sample_gaussian<D>(rng, s), {}}; }

// Keeps moduli at least `gap` away from a fixed threshold c.
void off_threshold(GradInput<D>& in, double c, double gap) {
  for (std::size_t i = 0; i < in.re.numel(); ++i) {
    const double r = std::hypot(in.re[i], in.im[i]);
    if (r > 0 && std::abs(r - c) < gap) {
      const double target = r < c ? c - gap : c + gap;
      in.re[i] *= target / r;
      in.im[i] *= target / r;
    }
  }
}

// Separates values inside each pooling window so no two compete within `gap`.
void off_ties(Tensor<D>& t, double gap) {
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] += gap * static_cast<double>(i % 97);
}

Outcome criterion_gradients() {
  struct Check {
    std::string name;
    std::function<pf::GradCheckResult()> run;
  };
  std::vector<Check> checks;
  checks.push_back({"conv_nobias", [] {
                      pf::Rng rng(1);
                      pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {4, 3, 3, 3}));
                      Projector p(rng, {2, 4, 3, 3}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>& t, const std::vector<Var<D>>& v) {
                            return p(ag::conv2d(v[0], t.param(w), nullptr, 2, 1));
                          },
                          {complex_input(rng, {2, 3, 6, 6})}, {&w}, kGradStep);
                    }});
  checks.push_back({"real_conv", [] {
                      pf::Rng rng(2);
                      pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {3, 2, 5, 5}));
                      pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {3}));
                      Projector p(rng, {2, 3, 4, 4}, false);
                      return pf::grad_check<D>(
                          [&](Tape<D>& t, const std::vector<Var<D>>& v) {
                            Var<D> bv = t.param(b);
                            return p(ag::conv2d(v[0], t.param(w), &bv, 1, 0));
                          },
                          {real_input(rng, {2, 2, 8, 8})}, {&w, &b}, kGradStep);
                    }});
  checks.push_back({"delta_c", [] {
                      pf::Rng rng(3);
                      auto in = complex_input(rng, {2, 3, 4, 4});
                      off_threshold(in, 1.0, 1e-3);
                      Projector p(rng, {2, 3, 4, 4}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::delta(v[0], {1.0}, false)); },
                          {in}, {}, kGradStep);
                    }});
  checks.push_back({"delta_ck", [] {
                      pf::Rng rng(4);
                      auto in = complex_input(rng, {2, 3, 3, 3});
                      const auto c = ag::channel_mean_abs(ComplexTensor<D>(in.re, in.im));
                      for (std::size_t n = 0; n < 2; ++n)
                        for (std::size_t k = 0; k < 3; ++k)
                          for (std::size_t i = 0; i < 9; ++i) {
                            const std::size_t e = (n * 3 + k) * 9 + i;
                            if (std::abs(std::hypot(in.re[e], in.im[e]) - c[k]) < 0.05) {
                              in.re[e] *= 1.3;
                              in.im[e] *= 1.3;
                            }
                          }
                      Projector p(rng, {2, 3, 3, 3}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::delta(v[0], {}, true)); }, {in},
                          {}, kGradStep);
                    }});
  checks.push_back({"complex_norm", [] {
                      pf::Rng rng(5);
                      Projector p(rng, {3, 2, 3, 3}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::complex_norm(v[0], {}, true)); },
                          {complex_input(rng, {3, 2, 3, 3})}, {}, kGradStep);
                    }});
  checks.push_back({"mag_maxpool", [] {
                      pf::Rng rng(6);
                      auto in = complex_input(rng, {2, 2, 6, 6});
                      off_ties(in.re, 1e-3);
                      Projector p(rng, {2, 2, 3, 3}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::max_pool(v[0], 2, 2)); }, {in},
                          {}, kGradStep);
                    }});
  checks.push_back({"real_maxpool", [] {
                      pf::Rng rng(7);
                      auto in = real_input(rng, {1, 2, 6, 6});
                      off_ties(in.re, 1e-3);
                      Projector p(rng, {1, 2, 3, 3}, false);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::max_pool(v[0], 2, 2)); }, {in},
                          {}, kGradStep);
                    }});
  checks.push_back({"avgpool", [] {
                      pf::Rng rng(8);
                      Projector p(rng, {2, 2, 2, 2}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::avg_pool(v[0], 3, 2)); },
                          {complex_input(rng, {2, 2, 5, 5})}, {}, kGradStep);
                    }});
  checks.push_back({"dropout", [] {
                      pf::Rng rng(9);
                      Tensor<D> mask({2, 3, 3, 3});
                      for (auto& m : mask.data()) m = rng.bernoulli(0.7) ? 1.0 / 0.7 : 0.0;
                      Projector p(rng, {2, 3, 3, 3}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) { return p(ag::apply_mask(v[0], mask)); },
                          {complex_input(rng, {2, 3, 3, 3})}, {}, kGradStep);
                    }});
  checks.push_back({"skip", [] {
                      pf::Rng rng(10);
                      auto spec = pf::spec::skip("blk", {pf::spec::conv_nobias("c1", 2, 2, 3, 1, 1),
                                                         pf::spec::complex_norm("n", 2),
                                                         pf::spec::conv_nobias("c2", 2, 2, 3, 1, 1)});
                      auto layer = pf::make_layer<D>(spec, rng);
                      std::vector<pf::Parameter<D>*> params;
                      layer->collect(params);
                      Projector p(rng, {2, 2, 4, 4}, true);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) {
                            pf::Context<D> ctx;
                            ctx.training = true;
                            ctx.update_stats = false;
                            return p(layer->forward(v[0], ctx));
                          },
                          {complex_input(rng, {2, 2, 4, 4})}, params, kGradStep);
                    }});
  checks.push_back({"relu_fc_sigmoid", [] {
                      pf::Rng rng(11);
                      pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {4, 6}));
                      pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {4}));
                      auto in = real_input(rng, {3, 6});
                      for (auto& v : in.re.data())
                        if (std::abs(v) < 1e-2) v = 0.1;
                      Projector p(rng, {3, 4}, false);
                      return pf::grad_check<D>(
                          [&](Tape<D>& t, const std::vector<Var<D>>& v) {
                            Var<D> bv = t.param(b);
                            return p(ag::sigmoid(ag::linear(ag::relu(v[0]), t.param(w), &bv)));
                          },
                          {in}, {&w, &b}, kGradStep);
                    }});
  checks.push_back({"batch_norm", [] {
                      pf::Rng rng(12);
                      pf::Parameter<D> g("g", pf::sample_uniform<D>(rng, 0.5, 1.5, {2}));
                      pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {2}));
                      Projector p(rng, {3, 2, 2, 2}, false);
                      return pf::grad_check<D>(
                          [&](Tape<D>& t, const std::vector<Var<D>>& v) {
                            return p(ag::batch_norm(v[0], t.param(g), t.param(b), {0.1, -0.2}, {1.5, 0.7}, true));
                          },
                          {real_input(rng, {3, 2, 2, 2})}, {&g, &b}, kGradStep);
                    }});
  checks.push_back({"softmax_xent", [] {
                      pf::Rng rng(13);
                      const std::vector<int> labels = {0, 3, 2};
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) {
                            return ag::softmax_cross_entropy<D>(v[0], labels);
                          },
                          {real_input(rng, {3, 4})}, {}, kGradStep);
                    }});
  checks.push_back({"encrypt_decrypt", [] {
                      pf::Rng rng(14);
                      Projector p(rng, {3, 2, 2, 2}, false);
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) {
                            Var<D> x = ag::encrypt(v[0], {1, 2, 0}, {0.3, 2.0, 5.0});
                            return p(ag::decrypt(x, {0.3, 2.0, 5.0}));
                          },
                          {real_input(rng, {3, 2, 2, 2})}, {}, kGradStep);
                    }});
  checks.push_back({"decoder_plumbing", [] {
                      pf::Rng rng(15);
                      auto target = pf::sample_gaussian<D>(rng, {2, 2, 6, 6});
                      return pf::grad_check<D>(
                          [&](Tape<D>&, const std::vector<Var<D>>& v) {
                            Var<D> cat = ag::concat_channels(ag::real_part(v[0]), ag::imag_part(v[0]));
                            Var<D> up = ag::upsample2x(ag::reshape(cat, {2, 2, 2, 2}));
                            return ag::mse(ag::fit_spatial(up, 6, 6), target);
                          },
                          {complex_input(rng, {2, 1, 2, 2})}, {}, kGradStep);
                    }});

  bool pass = true;
  double worst = 0;
  std::string worst_name;
  for (const auto& c : checks) {
    const auto r = c.run();
    pass = pass && r.coordinates > 0 && r.max_rel_error < kGradTol;
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = c.name + " " + r.worst;
  }
  return {pass, std::to_string(checks.size()) + " ops, worst relative error " + sci(worst) + " (" + worst_name + ")"};
}

// ---- criterion 4: loss oracles ---------------------------------------------------

// Critic score of one (c, h, w) sample, written out longhand: 3x3 conv
// (stride 2, pad 1) + bias, ReLU, dense layer to one output.
long double oracle_score(const pf::Discriminator<D>& critic, const D* f, const pf::Shape& s) {
  const auto ps = critic.parameters();
  const Tensor<D>& cw = ps[0]->value;
  const Tensor<D>& cb = ps[1]->value;
  const Tensor<D>& fw = ps[2]->value;
  const Tensor<D>& fb = ps[3]->value;
  const std::size_t C = s[0], H = s[1], W = s[2], K = cw.dim(0);
  const std::size_t oh = (H - 1) / 2 + 1, ow = (W - 1) / 2 + 1;
  long double out = fb[0];
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        long double acc = cb[k];
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t dy = 0; dy < 3; ++dy)
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const long iy = static_cast<long>(2 * y + dy) - 1, ix = static_cast<long>(2 * x + dx) - 1;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
              acc += static_cast<long double>(cw[((k * C + c) * 3 + dy) * 3 + dx]) *
                     f[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
            }
        if (acc < 0) acc = 0;
        out += static_cast<long double>(fw[(k * oh + y) * ow + x]) * acc;
      }
  return out;
}

Outcome criterion_loss_oracles() {
  pf::Network<D> net(pf::build("lenet"), 31);
  const pf::Shape fs = net.division().feature_shape();
  pf::Discriminator<D> critic(fs, 32);
  // weights at the clip bound's scale, like a trained critic
  pf::Rng wrng(33);
  for (auto* p : critic.parameters())
    for (auto& v : p->value.data()) v = wrng.uniform(-0.05, 0.05);
  const auto data = pf::synth_dataset(200, 10, 32, 34);
  pf::Rng rng(35);
  const std::size_t n = 6, per = pf::numel_of(fs);
  double worst_adv = 0, worst_task = 0;
  for (std::size_t batch = 0; batch < kLossBatches; ++batch) {
    const auto order = pf::permutation(data.size(), rng);
    const std::vector<std::size_t> idx(order.begin(), order.begin() + n);
    const Tensor<D> images = data.batch<D>(idx);
    const std::vector<int> labels = data.batch_labels(idx);
    const auto draws = pf::draw_step(n, rng);
    const auto sched = pf::sample_offsets(8, rng);

    Tape<D> tape;
    pf::Context<D> ctx;  // eval mode: the frozen model's statistics
    const auto out = pf::pipeline_forward(net, tape, images, draws, ctx, nullptr);
    const double adv = pf::adv_loss(critic, out.a, pf::make_fakes(out.a, out.b, sched), true).re()[0];
    const double task = pf::task_loss(out.logits, labels).re()[0];

    // adversarial oracle: sum over samples, and over offsets per sample
    const Tensor<D> a = out.a.re();
    long double want_adv = 0;
    std::vector<D> fake(per);
    for (std::size_t i = 0; i < n; ++i) {
      const D* ai = a.raw() + i * per;
      const D* bi = a.raw() + draws.partners[i] * per;
      long double fakes = 0;
      for (double d : sched.offsets) {
        for (std::size_t e = 0; e < per; ++e) fake[e] = ai[e] * std::cos(d) - bi[e] * std::sin(d);
        fakes += oracle_score(critic, fake.data(), fs);
      }
      want_adv += oracle_score(critic, ai, fs) - fakes / static_cast<long double>(sched.offsets.size());
    }
    want_adv /= static_cast<long double>(n);

    // task oracle: logits from the non-differentiable inference path
    const Tensor<D> logits = pf::secure_logits(net, images, draws.theta, draws.partners);
    const std::size_t classes = logits.dim(1);
    long double want_task = 0;
    for (std::size_t i = 0; i < n; ++i) {
      long double mx = logits[i * classes];
      for (std::size_t c = 1; c < classes; ++c) mx = std::max<long double>(mx, logits[i * classes + c]);
      long double z = 0;
      for (std::size_t c = 0; c < classes; ++c) z += std::exp(static_cast<long double>(logits[i * classes + c]) - mx);
      want_task += mx + std::log(z) - logits[i * classes + static_cast<std::size_t>(labels[i])];
    }
    want_task /= static_cast<long double>(n);

    worst_adv = std::max(worst_adv, std::abs(adv - static_cast<double>(want_adv)));
    worst_task = std::max(worst_task, std::abs(task - static_cast<double>(want_task)));
  }
  const bool pass = worst_adv < kLossOracleTol && worst_task < kLossOracleTol;
  return {pass, std::to_string(kLossBatches) + " batches, max |adv - oracle| " + sci(worst_adv) +
                    ", max |task - oracle| " + sci(worst_task)};
}

// ---- shared experiment pool (criteria 5-8) -----------------------------------------

pf::ExperimentConfig base_config(std::uint64_t seed) {
  pf::ExperimentConfig c;
  c.seed = seed;
  c.train_size = kTrainSize;
  c.test_size = kTestSize;
  c.train.epochs = kEpochs;
  c.attack_epochs = kAttackEpochs;
  c.decoder_width = kDecoderWidth;
  c.decoder_levels = kDecoderLevels;
  c.attack_lr = kAttackLr;
  return c;
}

pf::ExperimentConfig variant_config(std::uint64_t seed, pf::Variant v, double lambda = 1.0, double gamma = 0.0) {
  auto c = base_config(seed);
  c.variant = v;
  c.train.lambda_adv = lambda;
  c.gamma = gamma;
  return c;
}

class Pool {
 public:
  const pf::DataSplit& data() {
    if (!data_) data_ = std::make_unique<pf::DataSplit>(pf::load_data(base_config(1)));
    return *data_;
  }

  const pf::TrainedModel& model(const pf::ExperimentConfig& c) {
    const std::string key = pf::echo(c);
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    auto m = pf::train_model(c, data());
    std::cout << "    trained " << pf::victim_name(m.net->division()) << " lambda " << c.train.lambda_adv << " seed "
              << c.seed << ": test error " << fmt(m.test_error) << "% ("
              << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3) << " s)"
              << std::endl;
    return models_.emplace(key, std::move(m)).first->second;
  }

  double direct_attack(const pf::ExperimentConfig& c) {
    const auto& m = model(c);
    auto cfg = c;
    cfg.strategy = pf::Strategy::direct;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = pf::attack_model(cfg, *m.net, data()).report;
    std::cout << "    strategy 2 on " << r.victim << " seed " << c.seed << ": error " << fmt(r.reconstruction_error)
              << " (" << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 3)
              << " s)" << std::endl;
    return r.reconstruction_error;
  }

  double phase_attack(const pf::ExperimentConfig& c) {
    const auto& m = model(c);
    const double e = pf::phase_attack_error(*m.net, data().train, data().test, c.attack_options(), pf::attack_seed(c));
    std::cout << "    strategy 1 on lambda " << c.train.lambda_adv << " seed " << c.seed << ": angle error " << fmt(e)
              << " rad" << std::endl;
    return e;
  }

 private:
  std::unique_ptr<pf::DataSplit> data_;
  std::map<std::string, pf::TrainedModel> models_;
};

Pool& pool() {
  static Pool p;
  return p;
}

// ---- criterion 5: utility --------------------------------------------------------

Outcome criterion_utility() {
  const double complex_err = pool().model(variant_config(1, pf::Variant::complex)).test_error;
  const double base_err = pool().model(variant_config(1, pf::Variant::original)).test_error;
  const double gap = complex_err - base_err;
  return {gap <= kUtilityGap, "synthetic " + std::to_string(kTrainSize) + "/" + std::to_string(kTestSize) + ", " +
                                  std::to_string(kEpochs) + " epochs: complex " + fmt(complex_err) + "%, baseline " +
                                  fmt(base_err) + "%, gap " + fmt(gap) + " points (limit " + fmt(kUtilityGap) + ")"};
}

// ---- criterion 6: reconstruction privacy -------------------------------------------

Outcome criterion_reconstruction() {
  std::vector<double> defended, plain;
  for (std::uint64_t s = 1; s <= kPrivacySeeds; ++s) {
    defended.push_back(pool().direct_attack(variant_config(s, pf::Variant::complex)));
    plain.push_back(pool().direct_attack(variant_config(s, pf::Variant::original)));
  }
  const double ratio = mean(defended) / mean(plain);
  return {ratio >= kReconRatio, "strategy-2 error defended [" + join(defended) + "] mean " + fmt(mean(defended)) +
                                    ", baseline [" + join(plain) + "] mean " + fmt(mean(plain)) + ", ratio " +
                                    fmt(ratio, 3) + " (need >= " + fmt(kReconRatio) + ")"};
}

// ---- criterion 7: phase estimation ------------------------------------------------

Outcome criterion_phase() {
  std::vector<double> adv, ablation;
  for (std::uint64_t s = 1; s <= kPhaseSeeds; ++s) {
    adv.push_back(pool().phase_attack(variant_config(s, pf::Variant::complex, 1.0)));
    ablation.push_back(pool().phase_attack(variant_config(s, pf::Variant::complex, 0.0)));
  }
  const bool pass = mean(adv) >= kMinAngleError && mean(adv) > mean(ablation);
  return {pass, "angle error lambda=1 [" + join(adv) + "] mean " + fmt(mean(adv)) + " rad, lambda=0 [" +
                    join(ablation) + "] mean " + fmt(mean(ablation)) + " rad (need >= " + fmt(kMinAngleError) +
                    " and > ablation)"};
}

// ---- criterion 8: noisy baselines ---------------------------------------------------

Outcome criterion_noise_ordering() {
  const std::vector<double> gammas = pf::ExperimentConfig{}.gamma_presets;
  std::vector<double> cls, rec;
  for (double g : gammas) {
    std::vector<double> c, r;
    for (std::uint64_t s = 1; s <= kPrivacySeeds; ++s) {
      const auto cfg = variant_config(s, pf::Variant::noisy, 1.0, g);
      c.push_back(pool().model(cfg).test_error);
      r.push_back(pool().direct_attack(cfg));
    }
    cls.push_back(mean(c));
    rec.push_back(mean(r));
  }
  const bool pass = std::is_sorted(cls.begin(), cls.end()) && std::is_sorted(rec.begin(), rec.end());
  return {pass, "gamma [" + join(gammas) + "]: mean classification error [" + join(cls) +
                    "] %, mean reconstruction error [" + join(rec) + "] (both must be non-decreasing)"};
}

// ---- criterion 9: reproducibility ----------------------------------------------------

pf::ExperimentConfig small_run_config() {
  pf::ExperimentConfig c;
  c.seed = 99;
  c.train_size = 120;
  c.test_size = 40;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.attack_epochs = 2;
  c.decoder_levels = 2;
  c.strategy = pf::Strategy::phase_search;
  c.critic_epochs = 2;
  return c;
}

fs::path scratch_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("phasefort_acceptance_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

Outcome criterion_reproducibility() {
  const auto c = small_run_config();
  const auto data = pf::load_data(c);
  std::vector<std::string> ckpt, logs, reports;
  std::vector<pf::AttackReport> parsed;
  for (const std::string tag : {"a", "b"}) {
    const fs::path dir = scratch_dir("repro_" + tag);
    pf::train_run(c, data, dir);
    parsed.push_back(pf::attack_run(c, dir / "checkpoint.pfck", data, dir).report);
    ckpt.push_back(pf::read_text(dir / "checkpoint.pfck"));
    logs.push_back(pf::read_text(dir / "train_log.csv"));
    reports.push_back(pf::read_text(dir / "attack_report.csv"));
    fs::remove_all(dir);
  }
  const bool pass = ckpt[0] == ckpt[1] && logs[0] == logs[1] && reports[0] == reports[1] && parsed[0] == parsed[1];
  return {pass, "checkpoints " + std::string(ckpt[0] == ckpt[1] ? "identical" : "DIFFER") + " (" +
                    std::to_string(ckpt[0].size()) + " bytes), training logs " +
                    (logs[0] == logs[1] ? "identical" : "DIFFER") + ", attack reports " +
                    (reports[0] == reports[1] && parsed[0] == parsed[1] ? "identical" : "DIFFER")};
}

// ---- criterion 10: secrecy -------------------------------------------------------------

template <typename V>
bool contains_pattern(std::string_view hay, V value) {
  char buf[sizeof(V)];
  std::memcpy(buf, &value, sizeof(V));
  return hay.find(std::string_view(buf, sizeof(V))) != std::string_view::npos;
}

std::string as_text(const pf::io::Bytes& b) { return std::string(b.begin(), b.end()); }

Outcome criterion_secrecy() {
  std::vector<std::string> problems;
  auto c = small_run_config();
  c.train.epochs = 1;
  const auto data = pf::load_data(c);

  // checkpoint: only named parameter records, none of them secret-bearing
  const fs::path dir = scratch_dir("secrecy");
  const auto m = pf::train_run(c, data, dir);
  const std::string ckpt = pf::read_text(dir / "checkpoint.pfck");
  fs::remove_all(dir);
  for (std::string_view word : {"theta", "fooling", "partner", "secret"})
    if (ckpt.find(word) != std::string::npos) problems.push_back("checkpoint mentions '" + std::string(word) + "'");
  const pf::io::Bytes ckpt_bytes(ckpt.begin(), ckpt.end());
  const auto loaded = pf::decode_checkpoint<pf::Real>(ckpt_bytes);  // rejects unknown or extra records
  if (pf::encode_checkpoint(*loaded.net, loaded.header) != ckpt_bytes) problems.push_back("checkpoint not canonical");

  // wire payload and attack-visible pair records for known secrets
  pf::Rng rng(77);
  const auto images = data.test.images.slice_batch(0, 16);
  const auto req = pf::client_encrypt(*m.net, images, rng);
  const std::string wire = as_text(pf::serialize(req.wire));
  pf::io::Bytes two;
  pf::io::encode_tensor(two, req.wire.x.re);
  pf::io::encode_tensor(two, req.wire.x.im);
  if (as_text(two) != wire) problems.push_back("wire payload carries more than the two planes");

  pf::Rng rel_rng(78);
  const auto rel = pf::release_with_secrets(*m.net, data.test.head(16), pf::PairMode::encrypted, rel_rng);
  pf::io::Bytes pairs;
  pf::io::encode_tensor(pairs, rel.pairs.features);
  pf::io::encode_tensor(pairs, rel.pairs.images);
  for (std::size_t s : rel.pairs.source) pf::io::put_u64(pairs, s);
  const std::string pair_text = as_text(pairs);

  std::size_t scanned = 0;
  auto scan = [&](const std::vector<pf::SecretRecord>& secrets) {
    for (const auto& s : secrets) {
      ++scanned;
      for (const std::string* hay : {&wire, &pair_text, &ckpt}) {
        if (contains_pattern(*hay, s.theta) || contains_pattern(*hay, static_cast<float>(s.theta))) {
          problems.push_back("phase value found in serialized bytes");
        }
      }
    }
  };
  scan(req.secrets);
  scan(rel.secrets);
  for (std::size_t i = 0; i < rel.pairs.size(); ++i)
    if (rel.pairs.source[i] >= data.test.size()) problems.push_back("pair source is not a dataset index");

  std::string detail = std::to_string(scanned) + " secret phases scanned across checkpoint (" +
                       std::to_string(ckpt.size()) + " B), wire payload and pair records";
  if (!problems.empty()) detail += "; " + problems.front();
  return {problems.empty(), detail};
}

// ---- driver --------------------------------------------------------------------------------

struct Criterion {
  int number;
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "equivariance", criterion_equivariance},
      {2, "phase invariance", criterion_invariance},
      {3, "gradients", criterion_gradients},
      {4, "loss oracles", criterion_loss_oracles},
      {5, "utility", criterion_utility},
      {6, "reconstruction privacy", criterion_reconstruction},
      {7, "phase estimation privacy", criterion_phase},
      {8, "noise ordering", criterion_noise_ordering},
      {9, "reproducibility", criterion_reproducibility},
      {10, "secrecy", criterion_secrecy},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.number << " (" << c.title << "): " << o.detail
              << "  [" << fmt(secs, 3) << " s]" << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}

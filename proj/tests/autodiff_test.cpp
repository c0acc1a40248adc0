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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "phasefort/autodiff.hpp"
#include "phasefort/graph_ops.hpp"
#include "phasefort/layers.hpp"
#include "phasefort/optim.hpp"
#include "phasefort/rng.hpp"

namespace pf = phasefort;
namespace ag = phasefort::ag;
using pf::ComplexTensor;
using pf::GradInput;
using pf::Tape;
using pf::Tensor;
using pf::Var;
using D = double;

namespace {

constexpr double kTol = 1e-4;

// Projects an output onto fixed random directions so every output
// coordinate contributes to the scalar under test.
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

// Scales each complex element so its modulus stays at least `gap` away from c.
void push_off_boundary(GradInput<D>& in, double c, double gap) {
  for (std::size_t i = 0; i < in.re.numel(); ++i) {
    const double r = std::hypot(in.re[i], in.im[i]);
    if (std::abs(r - c) < gap && r > 0) {
      const double target = r < c ? c - gap : c + gap;
      in.re[i] *= target / r;
      in.im[i] *= target / r;
    }
  }
}

void expect_check(const pf::GradCheckResult& r, double tol = kTol) {
  EXPECT_LT(r.max_rel_error, tol) << "worst coordinate " << r.worst << " of " << r.coordinates;
  EXPECT_GT(r.coordinates, 0u);
}

}  // namespace

TEST(Tape, SumOfSquaresGradient) {
  Tape<D> t;
  Var<D> x = t.input(Tensor<D>({1}, 3.0), true);
  t.backward(ag::sum(ag::mul(x, x)));
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 6.0);
}

TEST(Tape, RealPartOfDerotationGradient) {
  const double theta = 0.9;
  Tape<D> t;
  Var<D> x = t.input(ComplexTensor<D>(Tensor<D>({1}, 1.0), Tensor<D>({1}, 1.0)), true);
  Var<D> y = ag::sum(ag::real_part(ag::rotate(x, -theta)));
  t.backward(y);
  EXPECT_NEAR(t.grad(x)[0], std::cos(theta), 1e-15);
  EXPECT_NEAR(t.grad_imag(x)[0], std::sin(theta), 1e-15);
}

TEST(Tape, ForwardOfDerotation) {
  Tape<D> t;
  Var<D> x = t.constant(ComplexTensor<D>(Tensor<D>({1}, 1.0), Tensor<D>({1}, 1.0)));
  Var<D> y = ag::real_part(ag::rotate(x, -std::numbers::pi / 2));
  EXPECT_NEAR(y.re()[0], 1.0, 1e-15);
}

TEST(Tape, ConstantGraphIgnoresInputs) {
  for (double v : {1.0, -5.0}) {
    Tape<D> t;
    Var<D> x = t.input(Tensor<D>({2}, v), true);
    (void)x;
    Var<D> c = t.constant(Tensor<D>({2}, 7.0));
    EXPECT_DOUBLE_EQ(ag::sum(c).re()[0], 14.0);
  }
}

TEST(Tape, ForwardIsPure) {
  pf::Rng rng(1);
  auto x = pf::sample_complex_gaussian<D>(rng, {2, 3, 4, 4});
  auto w = pf::sample_gaussian<D>(rng, {2, 3, 3, 3});
  auto run = [&] {
    Tape<D> t;
    return ag::delta(ag::conv2d(t.constant(x), t.constant(w), nullptr, 1, 1), {1.0}, false)
        .complex_value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, NonScalarLossRejected) {
  Tape<D> t;
  Var<D> x = t.input(Tensor<D>({3}), true);
  EXPECT_THROW(t.backward(x), pf::Error);
  Var<D> z = t.input(ComplexTensor<D>({1}), true);
  EXPECT_THROW(t.backward(z), pf::Error);
}

TEST(Tape, UnboundVariableRejected) {
  Var<D> v;
  EXPECT_FALSE(v.bound());
  EXPECT_THROW(v.tape(), pf::Error);
}

TEST(Tape, StaleTapeRejected) {
  pf::Parameter<D> p("w", Tensor<D>({2}, 1.0));
  Tape<D> t;
  Var<D> loss = ag::sum(t.param(p));
  p.value[0] = 5;
  p.touch();
  EXPECT_THROW(t.backward(loss), pf::Error);
}

TEST(Tape, MixingTapesRejected) {
  Tape<D> a, b;
  Var<D> x = a.constant(Tensor<D>({1}));
  Var<D> y = b.constant(Tensor<D>({1}));
  EXPECT_THROW(ag::add(x, y), pf::Error);
}

TEST(Tape, DetachedParameterGetsNoGradient) {
  pf::Parameter<D> p("frozen", Tensor<D>({3}, 2.0), false);
  pf::Parameter<D> q("live", Tensor<D>({3}, 2.0));
  Tape<D> t;
  t.backward(ag::sum(ag::add(t.param(p), t.param(q))));
  EXPECT_EQ(pf::max_abs(p.grad), 0.0);
  EXPECT_EQ(q.grad, Tensor<D>({3}, 1.0));
}

TEST(Tape, RepeatedBackwardIsIdempotentAfterZeroGrad) {
  pf::Rng rng(2);
  pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {4, 3, 3, 3}));
  auto x = pf::sample_complex_gaussian<D>(rng, {2, 3, 5, 5});
  Tape<D> t;
  Var<D> y = ag::conv2d(t.constant(x), t.param(w), nullptr, 1, 0);
  Var<D> loss = ag::sum(ag::real_part(ag::delta(y, {0.8}, false)));
  t.backward(loss);
  Tensor<D> g1 = w.grad;
  w.zero_grad();
  t.backward(loss);
  EXPECT_EQ(w.grad, g1);
}

TEST(Tape, BackwardIsLinearInOutputs) {
  pf::Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto x0 = pf::sample_complex_gaussian<D>(rng, {2, 2, 6, 6});
    pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {3, 2, 3, 3}));
    auto grads = [&](int which) {
      w.zero_grad();
      Tape<D> t;
      Var<D> x = t.input(x0, true);
      Var<D> h = ag::conv2d(x, t.param(w), nullptr, 1, 1);
      Var<D> a = ag::sum(ag::real_part(ag::delta(h, {}, true)));
      Var<D> b = ag::sum(ag::imag_part(ag::max_pool(h, 2, 2)));
      Var<D> out = which == 0 ? a : which == 1 ? b : ag::add(a, b);
      t.backward(out);
      return std::make_pair(t.grad(x) + t.grad_imag(x), w.grad);
    };
    auto [xa, wa] = grads(0);
    auto [xb, wb] = grads(1);
    auto [xs, ws] = grads(2);
    EXPECT_LT(pf::max_abs_diff(xs, xa + xb), 1e-10);
    EXPECT_LT(pf::max_abs_diff(ws, wa + wb), 1e-10);
  }
}

// ---------------------------------------------------------------------------
// Finite-difference checks for every op

TEST(GradCheck, LinearOpIsNearlyExact) {
  pf::Rng rng(10);
  auto in = complex_input(rng, {1, 1, 2, 2});
  // Read-out weights bounded away from zero keep every true gradient O(1),
  // so the comparison is not dominated by rounding in the loss value.
  Tensor<D> wre = pf::sample_uniform<D>(rng, 0.5, 1.5, {1, 1, 2, 2});
  Tensor<D> wim = pf::sample_uniform<D>(rng, 0.5, 1.5, {1, 1, 2, 2});
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        return ag::weighted_sum(ag::scale(v[0], 1.7), wre, wim);
      },
      {in}, {});
  EXPECT_LT(r.max_rel_error, 1e-9) << r.worst;
}

TEST(GradCheck, ComplexConvNoBias) {
  pf::Rng rng(11);
  pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {4, 3, 3, 3}));
  Projector proj(rng, {2, 4, 3, 3}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>& t, const std::vector<Var<D>>& v) {
        return proj(ag::conv2d(v[0], t.param(w), nullptr, 2, 1));
      },
      {complex_input(rng, {2, 3, 6, 6})}, {&w});
  expect_check(r, 1e-8);
}

TEST(GradCheck, RealConvWithBias) {
  pf::Rng rng(12);
  pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {3, 2, 5, 5}));
  pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {3}));
  Projector proj(rng, {2, 3, 4, 4}, false);
  auto r = pf::grad_check<D>(
      [&](Tape<D>& t, const std::vector<Var<D>>& v) {
        Var<D> bv = t.param(b);
        return proj(ag::conv2d(v[0], t.param(w), &bv, 1, 0));
      },
      {real_input(rng, {2, 2, 8, 8})}, {&w, &b});
  expect_check(r, 1e-6);
}

TEST(GradCheck, PointwiseConv) {
  pf::Rng rng(13);
  pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {5, 3, 1, 1}));
  Projector proj(rng, {2, 5, 2, 2}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>& t, const std::vector<Var<D>>& v) {
        return proj(ag::conv2d(v[0], t.param(w), nullptr, 2, 0));
      },
      {complex_input(rng, {2, 3, 4, 4})}, {&w});
  expect_check(r, 1e-8);
}

TEST(GradCheck, DeltaFixedThreshold) {
  pf::Rng rng(14);
  auto in = complex_input(rng, {2, 3, 4, 4});
  push_off_boundary(in, 1.0, 1e-3);
  Projector proj(rng, {2, 3, 4, 4}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::delta(v[0], {1.0}, false)); }, {in}, {});
  expect_check(r, 1e-6);
}

TEST(GradCheck, DeltaChannelwiseThresholdFromBatch) {
  pf::Rng rng(15);
  auto in = complex_input(rng, {2, 3, 3, 3});
  // The batch statistic moves with each perturbation; keep every element well
  // away from its channel's threshold.
  const auto c = ag::channel_mean_abs(ComplexTensor<D>(in.re, in.im));
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 9; ++i) {
        const std::size_t e = (n * 3 + k) * 9 + i;
        const double r = std::hypot(in.re[e], in.im[e]);
        if (std::abs(r - c[k]) < 0.05) {
          in.re[e] *= 1.3;
          in.im[e] *= 1.3;
        }
      }
  }
  Projector proj(rng, {2, 3, 3, 3}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::delta(v[0], {}, true)); }, {in}, {});
  expect_check(r);
}

TEST(GradCheck, ComplexNormBatchAndFrozen) {
  pf::Rng rng(16);
  Projector proj(rng, {3, 2, 3, 3}, true);
  auto in = complex_input(rng, {3, 2, 3, 3});
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::complex_norm(v[0], {}, true)); }, {in},
      {}));
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        return proj(ag::complex_norm(v[0], {0.5, 2.0}, false));
      },
      {in}, {}));
}

TEST(GradCheck, MagnitudeMaxPool) {
  pf::Rng rng(17);
  auto in = complex_input(rng, {2, 2, 6, 6});  // continuous draws: ties have probability 0
  Projector proj(rng, {2, 2, 3, 3}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::max_pool(v[0], 2, 2)); }, {in}, {});
  expect_check(r, 1e-6);
}

TEST(GradCheck, OverlappingRealMaxPool) {
  pf::Rng rng(18);
  Projector proj(rng, {1, 2, 4, 4}, false);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::max_pool(v[0], 3, 1)); },
      {real_input(rng, {1, 2, 6, 6})}, {});
  expect_check(r, 1e-6);
}

TEST(GradCheck, AvgPool) {
  pf::Rng rng(19);
  Projector proj(rng, {2, 2, 2, 2}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::avg_pool(v[0], 3, 2)); },
      {complex_input(rng, {2, 2, 5, 5})}, {});
  expect_check(r, 1e-8);
}

TEST(GradCheck, DropoutMask) {
  pf::Rng rng(20);
  Tensor<D> mask({2, 3, 3, 3});
  for (auto& m : mask.data()) m = rng.bernoulli(0.7) ? 1.0 / 0.7 : 0.0;
  Projector proj(rng, {2, 3, 3, 3}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(ag::apply_mask(v[0], mask)); },
      {complex_input(rng, {2, 3, 3, 3})}, {});
  expect_check(r, 1e-8);
}

TEST(GradCheck, SkipBlockThroughLayers) {
  pf::Rng rng(21);
  auto spec = pf::spec::skip("blk",
                             {pf::spec::conv_nobias("c1", 2, 2, 3, 1, 1), pf::spec::delta_fixed("d", 2, 0.7),
                              pf::spec::conv_nobias("c2", 2, 2, 3, 1, 1)});
  auto layer = pf::make_layer<D>(spec, rng);
  std::vector<pf::Parameter<D>*> params;
  layer->collect(params);
  auto in = complex_input(rng, {1, 2, 4, 4});
  Projector proj(rng, {1, 2, 4, 4}, true);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        pf::Context<D> ctx;
        return proj(layer->forward(v[0], ctx));
      },
      {in}, params);
  expect_check(r);
}

TEST(GradCheck, ReluSigmoidLinear) {
  pf::Rng rng(22);
  pf::Parameter<D> w("w", pf::sample_gaussian<D>(rng, {4, 6}));
  pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {4}));
  Projector proj(rng, {3, 4}, false);
  auto in = real_input(rng, {3, 6});
  for (auto& v : in.re.data())
    if (std::abs(v) < 1e-3) v = 0.1;
  auto r = pf::grad_check<D>(
      [&](Tape<D>& t, const std::vector<Var<D>>& v) {
        Var<D> bv = t.param(b);
        return proj(ag::sigmoid(ag::linear(ag::relu(v[0]), t.param(w), &bv)));
      },
      {in}, {&w, &b});
  expect_check(r);
}

TEST(GradCheck, BatchNormTrainingAndEval) {
  pf::Rng rng(23);
  pf::Parameter<D> g("g", pf::sample_uniform<D>(rng, 0.5, 1.5, {2}));
  pf::Parameter<D> b("b", pf::sample_gaussian<D>(rng, {2}));
  Projector proj(rng, {3, 2, 2, 2}, false);
  auto in = real_input(rng, {3, 2, 2, 2});
  for (bool training : {true, false}) {
    auto r = pf::grad_check<D>(
        [&](Tape<D>& t, const std::vector<Var<D>>& v) {
          return proj(ag::batch_norm(v[0], t.param(g), t.param(b), {0.1, -0.2}, {1.5, 0.7}, training));
        },
        {in}, {&g, &b});
    expect_check(r);
  }
}

TEST(GradCheck, SoftmaxCrossEntropyAndSoftmaxLayer) {
  pf::Rng rng(24);
  const std::vector<int> labels = {0, 3, 2};
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return ag::softmax_cross_entropy<D>(v[0], labels); },
      {real_input(rng, {3, 4})}, {}));
  Projector proj(rng, {3, 4}, false);
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) { return proj(pf::layers::softmax(v[0])); },
      {real_input(rng, {3, 4})}, {}));
}

TEST(GradCheck, MseAndPlumbing) {
  pf::Rng rng(25);
  auto target = pf::sample_gaussian<D>(rng, {2, 2, 6, 6});
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        Var<D> cat = ag::concat_channels(ag::real_part(v[0]), ag::imag_part(v[0]));
        Var<D> up = ag::upsample2x(ag::reshape(cat, {2, 2, 2, 2}));
        return ag::mse(ag::fit_spatial(up, 6, 6), target);
      },
      {complex_input(rng, {2, 1, 2, 2})}, {}));
  Projector proj(rng, {3, 1, 3, 3}, false);
  expect_check(pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        Var<D> both = ag::concat_batch<D>({v[0], ag::scale(v[0], 2.0)});
        return proj(ag::fit_spatial(ag::gather_batch(both, {3, 0, 0}), 3, 3));
      },
      {real_input(rng, {2, 1, 4, 4})}, {}));
}

TEST(GradCheck, MakeComplexPerSampleRotate) {
  pf::Rng rng(26);
  Projector proj(rng, {3, 2, 2, 2}, false);
  auto r = pf::grad_check<D>(
      [&](Tape<D>&, const std::vector<Var<D>>& v) {
        Var<D> x = ag::rotate(ag::make_complex(v[0], v[1]), std::vector<double>{0.3, 2.0, -1.0});
        return proj(ag::real_part(ag::rotate(x, std::vector<double>{0.5, 1.0, 0.5})));
      },
      {real_input(rng, {3, 2, 2, 2}), real_input(rng, {3, 2, 2, 2})}, {});
  expect_check(r, 1e-8);
}

// ---------------------------------------------------------------------------
// Optimizers

TEST(Optim, SgdMomentumMatchesHandComputation) {
  pf::Parameter<D> p("p", Tensor<D>({1}, 1.0));
  pf::Sgd<D> opt({&p}, 0.1, 0.9);
  p.grad[0] = 2.0;
  opt.step();
  EXPECT_DOUBLE_EQ(p.value[0], 1.0 - 0.1 * 2.0);
  opt.step();  // v = 0.9*2 + 2 = 3.8
  EXPECT_NEAR(p.value[0], 0.8 - 0.38, 1e-15);
}

TEST(Optim, SkipsFrozenAndBumpsVersion) {
  pf::Parameter<D> p("p", Tensor<D>({1}, 1.0), false);
  pf::Parameter<D> q("q", Tensor<D>({1}, 1.0));
  p.grad[0] = q.grad[0] = 1.0;
  auto opt = pf::make_optimizer<D>(pf::OptimizerKind::rmsprop, {&p, &q}, 0.01);
  const auto v = q.version;
  opt->step();
  EXPECT_EQ(p.value[0], 1.0);
  EXPECT_LT(q.value[0], 1.0);
  EXPECT_GT(q.version, v);
  EXPECT_THROW(pf::parse_optimizer("lbfgs"), pf::Error);
}

TEST(Optim, AdamMinimizesQuadratic) {
  pf::Parameter<D> p("p", Tensor<D>({2}, 5.0));
  pf::Adam<D> opt({&p}, 0.1);
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Tape<D> t;
    Var<D> x = t.param(p);
    t.backward(ag::sum(ag::mul(x, x)));
    opt.step();
  }
  EXPECT_LT(pf::max_abs(p.value), 1e-2);
}

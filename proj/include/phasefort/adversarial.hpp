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

// Adversarial training of the encoder. A critic D learns to tell the real
// feature a from the k-1 fakes Re[(a + i b) exp(i dtheta)] obtained with
// wrong phases; the encoder, processing module and decoder minimise
//
//   lambda * (E[D(a)] - E[D(a')]) + cross-entropy
//
// while D maximises the bracket (Wasserstein critic with weight clipping).

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "phasefort/data.hpp"
#include "phasefort/metrics.hpp"
#include "phasefort/network.hpp"
#include "phasefort/optim.hpp"
#include "phasefort/secure_inference.hpp"

namespace phasefort {

struct OffsetSchedule {
  std::size_t k = 8;
  double theta_min = 0.1;
  std::vector<double> offsets;  // k - 1 entries
};

/// k-1 offsets drawn i.i.d. from [theta_min, 2 pi - theta_min].
inline OffsetSchedule sample_offsets(std::size_t k, Rng& rng, double theta_min = 0.1) {
  if (k < 2) throw Error("anonymity count k must be at least 2");
  if (!(theta_min > 0) || theta_min >= std::numbers::pi) throw Error("theta_min must lie in (0, pi)");
  OffsetSchedule s;
  s.k = k;
  s.theta_min = theta_min;
  for (std::size_t j = 0; j + 1 < k; ++j) s.offsets.push_back(rng.uniform(theta_min, kTwoPi - theta_min));
  return s;
}

struct AdvBatchLosses {
  double d_loss = 0.0;  // critic objective, maximised by D
  double g_loss = 0.0;  // same bracket, minimised by g/phi/d
  double task_loss = 0.0;
  double total = 0.0;
};

/// Fakes Re[(a + i b) exp(i dtheta_j)] = a cos - b sin, one per offset.
template <typename T>
std::vector<Var<T>> make_fakes(const Var<T>& a, const Var<T>& b, const OffsetSchedule& s) {
  if (s.offsets.empty()) throw Error("empty offset schedule");
  Var<T> ab = ag::make_complex(a, b);
  std::vector<Var<T>> fakes;
  for (double d : s.offsets) fakes.push_back(ag::real_part(ag::rotate(ab, d)));
  return fakes;
}

/// mean_n [ D(a_n) - mean_j D(a'_{j,n}) ], evaluated with one critic pass
/// over the stacked batch.
template <typename T>
Var<T> adv_loss(const Discriminator<T>& D, const Var<T>& a, const std::vector<Var<T>>& fakes, bool frozen_critic) {
  if (fakes.empty()) throw Error("adv_loss needs at least one fake");
  std::vector<Var<T>> parts{a};
  parts.insert(parts.end(), fakes.begin(), fakes.end());
  Var<T> scores = D.score(ag::concat_batch(parts), frozen_critic);
  const std::size_t n = a.shape()[0], m = fakes.size();
  Tensor<T> w({n * (m + 1)});
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<T>(1.0 / static_cast<double>(n));
  for (std::size_t i = n; i < w.numel(); ++i) w[i] = static_cast<T>(-1.0 / static_cast<double>(n * m));
  return ag::weighted_sum(scores, w);
}

/// Mean softmax cross-entropy.
template <typename T>
Var<T> task_loss(const Var<T>& logits, std::span<const int> labels) {
  return ag::softmax_cross_entropy(logits, labels);
}

template <typename T>
void clip_discriminator(Discriminator<T>& D, double c_clip) {
  D.clip(c_clip);
}

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::size_t k = 8;
  double theta_min = 0.1;
  double lambda_adv = 1.0;
  std::size_t n_critic = 5;
  double c_clip = 0.01;
  double critic_lr = 5e-5;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double lr = 0.01;
  double momentum = 0.9;
  bool check_finite = false;

  bool operator==(const TrainOptions&) const = default;
};

/// Random draws of one step; exposed so a step can be replayed exactly.
struct StepDraws {
  std::vector<std::size_t> partners;
  std::vector<double> theta;
};

inline StepDraws draw_step(std::size_t n, Rng& rng) {
  StepDraws d;
  for (std::size_t i = 0; i < n; ++i) {
    d.partners.push_back(choose_partner(n, i, rng));
    d.theta.push_back(sample_phase(rng));
  }
  return d;
}

/// Logits and supervised/adversarial terms of one forward pass.
template <typename T>
struct PipelineOutput {
  Var<T> logits;
  Var<T> a;
  Var<T> b;
};

/// Forward of the full pipeline on a tape: complex variants encrypt with the
/// given draws; the noisy baseline adds gamma-scaled noise after g.
template <typename T>
PipelineOutput<T> pipeline_forward(const Network<T>& net, Tape<T>& tape, const Tensor<T>& images,
                                   const StepDraws& draws, Context<T>& ctx, Rng* noise_rng) {
  const auto& div = net.division();
  PipelineOutput<T> out;
  out.a = net.encode(tape.constant(images), ctx);
  if (div.complex_phi()) {
    out.b = ag::gather_batch(out.a, draws.partners);
    Var<T> x = ag::rotate(ag::make_complex(out.a, out.b), draws.theta);
    Var<T> h = net.process(x, ctx);
    out.logits = net.decode_logits(ag::decrypt(h, draws.theta), ctx);
    return out;
  }
  Var<T> f = out.a;
  if (div.variant == Variant::noisy && div.gamma > 0) {
    if (!noise_rng) throw Error("noisy variant needs a noise generator");
    Tensor<T> eps = noise_like(out.a.re(), *noise_rng);
    f = ag::add(f, tape.constant(eps * static_cast<T>(div.gamma)));
  }
  out.logits = net.decode_logits(net.process(f, ctx), ctx);
  return out;
}

/// Owns the optimiser state for one network and its critic.
template <typename T>
class Trainer {
 public:
  Trainer(Network<T>& net, TrainOptions opts, std::uint64_t seed)
      : net_(net), opts_(opts), rng_(derive_seed(seed, 0x7472)),
        critic_(net.division().feature_shape(), derive_seed(seed, 0x4431)) {
    if (opts_.batch_size < 2) throw Error("batch size must be at least 2");
    if (!(opts_.lambda_adv >= 0)) throw Error("lambda_adv must be non-negative");
    opt_ = make_optimizer<T>(opts_.optimizer, net_.trainable_parameters(), opts_.lr, opts_.momentum);
    critic_opt_ = std::make_unique<RmsProp<T>>(critic_.parameters(), opts_.critic_lr);
    critic_.clip(opts_.c_clip);
  }

  Network<T>& network() { return net_; }
  Discriminator<T>& critic() { return critic_; }
  const TrainOptions& options() const { return opts_; }
  std::size_t steps() const { return step_; }
  Rng& rng() { return rng_; }

  bool adversarial() const { return net_.division().complex_phi() && opts_.lambda_adv > 0; }

  AdvBatchLosses train_step(const Tensor<T>& images, std::span<const int> labels, const OffsetSchedule& schedule) {
    const StepDraws draws = draw_step(images.dim(0), rng_);
    return train_step(images, labels, schedule, draws);
  }

  AdvBatchLosses train_step(const Tensor<T>& images, std::span<const int> labels, const OffsetSchedule& schedule,
                            const StepDraws& draws) {
    const std::size_t n = images.dim(0);
    if (n < 2) throw Error("train_step needs a batch of at least two samples");
    if (labels.size() != n) throw ShapeError("label count does not match batch");
    AdvBatchLosses losses;
    if (adversarial()) losses.d_loss = critic_phase(images, schedule, draws);

    Tape<T> tape;
    tape.set_check_finite(opts_.check_finite);
    Context<T> ctx;
    ctx.training = true;
    ctx.rng = &rng_;
    ctx.check_finite = opts_.check_finite;
    PipelineOutput<T> out = pipeline_forward(net_, tape, images, draws, ctx, &rng_);
    Var<T> task = task_loss(out.logits, labels);
    Var<T> total = task;
    losses.task_loss = static_cast<double>(task.re()[0]);
    if (adversarial()) {
      Var<T> g = adv_loss(critic_, out.a, make_fakes(out.a, out.b, schedule), /*frozen_critic=*/true);
      losses.g_loss = static_cast<double>(g.re()[0]);
      total = ag::add(ag::scale(g, static_cast<T>(opts_.lambda_adv)), task);
    }
    losses.total = static_cast<double>(total.re()[0]);
    if (!std::isfinite(losses.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(step_) + " (task " +
                         std::to_string(losses.task_loss) + ", adversarial " + std::to_string(losses.g_loss) + ")");
    }
    opt_->zero_grad();
    tape.backward(total);
    opt_->step();
    ++step_;
    return losses;
  }

  /// One pass over `data` in a fresh random order; returns the mean losses.
  AdvBatchLosses train_epoch(const Dataset& data, std::size_t epoch, std::ostream* csv = nullptr) {
    Rng epoch_rng = rng_.fork(0x45504f43ull + epoch);
    const OffsetSchedule schedule = sample_offsets(opts_.k, epoch_rng, opts_.theta_min);
    const std::vector<std::size_t> order = permutation(data.size(), epoch_rng);
    AdvBatchLosses mean;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += opts_.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts_.batch_size);
      if (end - start < 2) break;
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor<T> images = data.batch<T>(idx);
      const std::vector<int> labels = data.batch_labels(idx);
      const AdvBatchLosses l = train_step(images, labels, schedule);
      if (csv) {
        *csv << epoch << ',' << step_ << ',' << l.d_loss << ',' << l.g_loss << ',' << l.task_loss << ','
             << l.total << '\n';
      }
      mean.d_loss += l.d_loss;
      mean.g_loss += l.g_loss;
      mean.task_loss += l.task_loss;
      mean.total += l.total;
      ++batches;
    }
    if (batches) {
      const double b = static_cast<double>(batches);
      mean.d_loss /= b, mean.g_loss /= b, mean.task_loss /= b, mean.total /= b;
    }
    return mean;
  }

  void fit(const Dataset& data, std::ostream* csv = nullptr) {
    for (std::size_t e = 0; e < opts_.epochs; ++e) train_epoch(data, e, csv);
  }

 private:
  // n_critic ascent steps on the critic with the encoder frozen.
  double critic_phase(const Tensor<T>& images, const OffsetSchedule& schedule, const StepDraws& draws) {
    Tensor<T> a, b;
    {
      Tape<T> tape;
      Context<T> ctx;
      ctx.training = true;
      ctx.update_stats = false;
      a = net_.encode(tape.constant(images), ctx).re();
      b = gather_batch(a, std::span<const std::size_t>(draws.partners));
    }
    double last = 0.0;
    for (std::size_t it = 0; it < opts_.n_critic; ++it) {
      Tape<T> tape;
      Var<T> av = tape.constant(a);
      Var<T> d = adv_loss(critic_, av, make_fakes(av, tape.constant(b), schedule), /*frozen_critic=*/false);
      last = static_cast<double>(d.re()[0]);
      critic_opt_->zero_grad();
      tape.backward(ag::scale(d, T{-1}));
      critic_opt_->step();
      critic_.clip(opts_.c_clip);
    }
    return last;
  }

  Network<T>& net_;
  TrainOptions opts_;
  Rng rng_;
  Discriminator<T> critic_;
  std::unique_ptr<Optimizer<T>> opt_;
  std::unique_ptr<RmsProp<T>> critic_opt_;
  std::size_t step_ = 0;
};

/// Test-time logits: complex pipelines use a fresh phase and partner per
/// sample, the noisy baseline fresh noise.
template <typename T>
Tensor<T> predict_logits(const Network<T>& net, const Tensor<T>& images, Rng& rng) {
  Tape<T> tape;
  Context<T> ctx;
  const StepDraws draws = net.division().complex_phi() ? draw_step(images.dim(0), rng) : StepDraws{};
  return pipeline_forward(net, tape, images, draws, ctx, &rng).logits.re();
}

/// Classification error (%) over a dataset.
template <typename T>
double evaluate_error(const Network<T>& net, const Dataset& data, Rng& rng, std::size_t batch = 100) {
  if (data.size() < 2) throw Error("evaluation needs at least two samples");
  batch = std::max<std::size_t>(batch, 2);
  std::size_t wrong = 0;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    // a lone trailing sample borrows its predecessor as fooling partner
    const std::size_t first = end - start < 2 ? start - 1 : start;
    std::vector<std::size_t> idx(end - first);
    std::iota(idx.begin(), idx.end(), first);
    const Tensor<T> logits = predict_logits(net, data.batch<T>(idx), rng);
    const std::vector<int> labels = data.batch_labels(idx);
    const std::size_t skip = start - first;
    const std::size_t c = data.classes;
    for (std::size_t i = skip; i < idx.size(); ++i) {
      const T* row = logits.raw() + i * c;
      if (std::max_element(row, row + c) - row != labels[i]) ++wrong;
    }
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(data.size());
}

}  // namespace phasefort

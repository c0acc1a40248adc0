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
#include <memory>
#include <string>
#include <vector>

#include "phasefort/autodiff.hpp"

namespace phasefort {

template <typename T>
class Optimizer {
 public:
  explicit Optimizer(std::vector<Parameter<T>*> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      if (!p.trainable) continue;
      update(i, p);
      p.touch();
    }
  }

  const std::vector<Parameter<T>*>& params() const { return params_; }

 protected:
  virtual void update(std::size_t i, Parameter<T>& p) = 0;

  std::vector<Parameter<T>*> params_;
};

template <typename T>
class Sgd final : public Optimizer<T> {
 public:
  Sgd(std::vector<Parameter<T>*> params, double lr, double momentum = 0.9)
      : Optimizer<T>(std::move(params)), lr_(lr), momentum_(momentum) {
    for (auto* p : this->params_) velocity_.emplace_back(p->value.shape());
  }

 protected:
  void update(std::size_t i, Parameter<T>& p) override {
    auto& v = velocity_[i];
    const T m = static_cast<T>(momentum_), lr = static_cast<T>(lr_);
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      v[k] = m * v[k] + p.grad[k];
      p.value[k] -= lr * v[k];
    }
  }

 private:
  double lr_, momentum_;
  std::vector<Tensor<T>> velocity_;
};

template <typename T>
class RmsProp final : public Optimizer<T> {
 public:
  RmsProp(std::vector<Parameter<T>*> params, double lr, double decay = 0.99, double eps = 1e-8)
      : Optimizer<T>(std::move(params)), lr_(lr), decay_(decay), eps_(eps) {
    for (auto* p : this->params_) square_.emplace_back(p->value.shape());
  }

 protected:
  void update(std::size_t i, Parameter<T>& p) override {
    auto& s = square_[i];
    const T d = static_cast<T>(decay_), lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const T g = p.grad[k];
      s[k] = d * s[k] + (T{1} - d) * g * g;
      p.value[k] -= lr * g / (std::sqrt(s[k]) + eps);
    }
  }

 private:
  double lr_, decay_, eps_;
  std::vector<Tensor<T>> square_;
};

template <typename T>
class Adam final : public Optimizer<T> {
 public:
  Adam(std::vector<Parameter<T>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : Optimizer<T>(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : this->params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
      t_.push_back(0);
    }
  }

 protected:
  void update(std::size_t i, Parameter<T>& p) override {
    const long t = ++t_[i];
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr_ * std::sqrt(c2) / c1);
    const T eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < p.value.numel(); ++k) {
      const T g = p.grad[k];
      m_[i][k] = b1 * m_[i][k] + (T{1} - b1) * g;
      v_[i][k] = b2 * v_[i][k] + (T{1} - b2) * g * g;
      p.value[k] -= step * m_[i][k] / (std::sqrt(v_[i][k]) + eps);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Tensor<T>> m_, v_;
  std::vector<long> t_;
};

enum class OptimizerKind { sgd, rmsprop, adam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  if (s == "adam") return OptimizerKind::adam;
  throw Error("unknown optimizer '" + s + "' (expected sgd, rmsprop or adam)");
}

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

template <typename T>
std::unique_ptr<Optimizer<T>> make_optimizer(OptimizerKind kind, std::vector<Parameter<T>*> params,
                                             double lr, double momentum = 0.9) {
  switch (kind) {
    case OptimizerKind::sgd: return std::make_unique<Sgd<T>>(std::move(params), lr, momentum);
    case OptimizerKind::rmsprop: return std::make_unique<RmsProp<T>>(std::move(params), lr);
    case OptimizerKind::adam: return std::make_unique<Adam<T>>(std::move(params), lr);
  }
  throw Error("unknown optimizer kind");
}

}  // namespace phasefort

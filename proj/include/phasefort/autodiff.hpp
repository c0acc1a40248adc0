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

// Define-by-run reverse-mode differentiation.
//
// Every node carries either a real tensor or a complex tensor stored as two
// real planes. Complex nodes are differentiated as elements of R^2: the
// gradient buffer has one plane per value plane and backward rules are the
// ordinary real chain rule applied to (re, im). No Wirtinger derivatives are
// involved because every loss in the system is a real function of the planes.
//
// Nodes are appended in evaluation order and may only reference earlier
// nodes, so the tape is always a topological order of an acyclic graph.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phasefort/rng.hpp"
#include "phasefort/tensor.hpp"

namespace phasefort {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  /// Bumped whenever `value` is written; tapes compare it to detect staleness.
  std::uint64_t version = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(train) {}

  void zero_grad() { grad.fill(T{0}); }
  void touch() { ++version; }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool bound() const { return tape_ != nullptr && id_ >= 0; }
  Tape<T>& tape() const {
    if (!bound()) throw Error("unbound variable used as graph input");
    return *tape_;
  }
  int id() const { return id_; }

  const Tensor<T>& re() const;
  const Tensor<T>& im() const;
  bool is_complex() const;
  const Shape& shape() const { return re().shape(); }
  ComplexTensor<T> complex_value() const { return ComplexTensor<T>(re(), im()); }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(Tape<T>&, const Node&)>;

  std::string op;
  std::vector<int> parents;
  Tensor<T> re, im;
  bool complex = false;
  bool needs_grad = false;
  Tensor<T> gre, gim;
  BackwardFn backward;
  Parameter<T>* param = nullptr;
  std::uint64_t param_version = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = typename Node<T>::BackwardFn;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When set, every pushed value is scanned for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t size() const { return nodes_.size(); }
  const Node<T>& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  Var<T> constant(Tensor<T> v) { return leaf("constant", std::move(v), {}, false, false); }
  Var<T> constant(ComplexTensor<T> v) {
    return leaf("constant", std::move(v.re), std::move(v.im), true, false);
  }
  Var<T> input(Tensor<T> v, bool requires_grad) {
    return leaf("input", std::move(v), {}, false, requires_grad);
  }
  Var<T> input(ComplexTensor<T> v, bool requires_grad) {
    return leaf("input", std::move(v.re), std::move(v.im), true, requires_grad);
  }

  Var<T> param(Parameter<T>& p) {
    Var<T> v = leaf("param:" + p.name, p.value, {}, false, p.trainable);
    auto& n = nodes_.back();
    n.param = &p;
    n.param_version = p.version;
    return v;
  }

  /// Append an op node. `fn` is dropped when no parent needs a gradient.
  Var<T> push(std::string op, std::initializer_list<Var<T>> parents, Tensor<T> re,
              Tensor<T> im, bool complex, BackwardFn fn) {
    return push(std::move(op), std::vector<Var<T>>(parents), std::move(re),
                std::move(im), complex, std::move(fn));
  }

  Var<T> push(std::string op, const std::vector<Var<T>>& parents, Tensor<T> re,
              Tensor<T> im, bool complex, BackwardFn fn) {
    Node<T> n;
    n.op = std::move(op);
    const int self = static_cast<int>(nodes_.size());
    for (const Var<T>& p : parents) {
      if (&p.tape() != this) throw Error(n.op + ": operand belongs to another tape");
      if (p.id() >= self) throw Error(n.op + ": cycle detected in graph");
      n.parents.push_back(p.id());
      n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p.id())].needs_grad;
    }
    n.re = std::move(re);
    n.im = std::move(im);
    n.complex = complex;
    if (complex && n.im.shape() != n.re.shape()) {
      throw ShapeError(n.op + ": complex planes disagree");
    }
    if (n.needs_grad) n.backward = std::move(fn);
    if (check_finite_) {
      require_finite(n.re, n.op);
      if (complex) require_finite(n.im, n.op);
    }
    nodes_.push_back(std::move(n));
    return Var<T>(this, self);
  }

  /// Gradient accumulators of a node, allocated on first use.
  Tensor<T>& grad_re(int id) {
    auto& n = nodes_.at(static_cast<std::size_t>(id));
    if (n.gre.empty() && !n.re.empty()) n.gre = Tensor<T>(n.re.shape());
    return n.gre;
  }
  Tensor<T>& grad_im(int id) {
    auto& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.complex) throw Error(n.op + ": imaginary gradient of a real node");
    if (n.gim.empty()) n.gim = Tensor<T>(n.im.shape());
    return n.gim;
  }
  bool needs_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).needs_grad; }

  /// Gradient of the last backward pass w.r.t. a node (zeros if unreached).
  Tensor<T> grad(const Var<T>& v) const {
    const auto& n = node(v.id());
    return n.gre.empty() ? Tensor<T>(n.re.shape()) : n.gre;
  }
  Tensor<T> grad_imag(const Var<T>& v) const {
    const auto& n = node(v.id());
    return n.gim.empty() ? Tensor<T>(n.im.shape()) : n.gim;
  }

  /// Reverse sweep from a scalar real loss. Parameter gradients accumulate
  /// into Parameter::grad; zero them between calls for a fresh gradient.
  void backward(const Var<T>& loss) {
    const auto& n = node(loss.id());
    if (n.complex || n.re.numel() != 1) {
      throw Error("backward requires a scalar real loss, got " + n.op + " " +
                  to_string(n.re.shape()));
    }
    Tensor<T> seed(n.re.shape(), T{1});
    backward(loss, std::move(seed), {});
  }

  /// Reverse sweep with an explicit output cotangent.
  void backward(const Var<T>& out, Tensor<T> seed_re, Tensor<T> seed_im) {
    if (&out.tape() != this) throw Error("backward on a variable from another tape");
    for (const auto& n : nodes_) {
      if (n.param && n.param->version != n.param_version) {
        throw Error("tape is stale: parameter '" + n.param->name +
                    "' changed after the forward pass");
      }
    }
    for (auto& n : nodes_) {
      n.gre = Tensor<T>();
      n.gim = Tensor<T>();
    }
    auto& root = nodes_.at(static_cast<std::size_t>(out.id()));
    require_same_shape(seed_re, root.re, "backward seed");
    root.gre = std::move(seed_re);
    if (root.complex) {
      root.gim = seed_im.empty() ? Tensor<T>(root.im.shape()) : std::move(seed_im);
    }
    for (int id = out.id(); id >= 0; --id) {
      auto& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || (n.gre.empty() && n.gim.empty())) continue;
      if (n.gre.empty()) n.gre = Tensor<T>(n.re.shape());
      if (n.complex && n.gim.empty()) n.gim = Tensor<T>(n.im.shape());
      if (n.param) {
        if (n.param->trainable) axpy(n.param->grad, n.gre);
        continue;
      }
      if (n.backward) n.backward(*this, n);
    }
  }

  void clear() { nodes_.clear(); }

 private:
  Var<T> leaf(std::string op, Tensor<T> re, Tensor<T> im, bool complex, bool needs_grad) {
    Node<T> n;
    n.op = std::move(op);
    n.re = std::move(re);
    n.im = std::move(im);
    n.complex = complex;
    n.needs_grad = needs_grad;
    if (complex && n.im.shape() != n.re.shape()) throw ShapeError("complex planes disagree");
    nodes_.push_back(std::move(n));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::vector<Node<T>> nodes_;
  bool check_finite_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::re() const {
  return tape().node(id_).re;
}
template <typename T>
const Tensor<T>& Var<T>::im() const {
  const auto& n = tape().node(id_);
  if (!n.complex) throw Error(n.op + ": imaginary plane of a real value");
  return n.im;
}
template <typename T>
bool Var<T>::is_complex() const {
  return tape().node(id_).complex;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

template <typename T>
struct GradInput {
  Tensor<T> re;
  Tensor<T> im;  // empty for real inputs
  bool complex() const { return !im.empty(); }
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;
};

template <typename T>
using GradFn = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

/// Compares reverse-mode gradients with central differences for every
/// coordinate of every input plane and parameter.
/// Error per coordinate: |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
GradCheckResult grad_check(const GradFn<T>& f, std::vector<GradInput<T>> inputs,
                           const std::vector<Parameter<T>*>& params, double step = 1e-5) {
  auto evaluate = [&](bool with_grad, std::vector<Tensor<T>>* grads) -> double {
    Tape<T> tape;
    std::vector<Var<T>> vars;
    for (const auto& in : inputs) {
      vars.push_back(in.complex() ? tape.input(ComplexTensor<T>(in.re, in.im), with_grad)
                                  : tape.input(in.re, with_grad));
    }
    Var<T> loss = f(tape, vars);
    if (loss.is_complex() || loss.re().numel() != 1) throw Error("grad_check: loss not scalar");
    if (with_grad) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        grads->push_back(tape.grad(vars[i]));
        if (inputs[i].complex()) grads->push_back(tape.grad_imag(vars[i]));
      }
      for (auto* p : params) grads->push_back(p->grad);
    }
    return static_cast<double>(loss.re()[0]);
  };

  std::vector<Tensor<T>> analytic;
  evaluate(true, &analytic);

  std::vector<std::pair<Tensor<T>*, std::string>> planes;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    planes.emplace_back(&inputs[i].re, "input" + std::to_string(i) + ".re");
    if (inputs[i].complex()) planes.emplace_back(&inputs[i].im, "input" + std::to_string(i) + ".im");
  }
  for (auto* p : params) planes.emplace_back(&p->value, p->name);

  GradCheckResult result;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    Tensor<T>& plane = *planes[k].first;
    for (std::size_t i = 0; i < plane.numel(); ++i) {
      const T saved = plane[i];
      plane[i] = static_cast<T>(saved + step);
      const double up = evaluate(false, nullptr);
      plane[i] = static_cast<T>(saved - step);
      const double down = evaluate(false, nullptr);
      plane[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double an = static_cast<double>(analytic[k][i]);
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-8});
      const double err = std::abs(an - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = planes[k].second + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace phasefort

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

// Client/server split of one inference:
//
//   client:  a = g(I), b = g(I') for some other sample I', theta random,
//            x = exp(i theta) (a + i b)           -> sent to the server
//   server:  h = phi(x)                           -> sent back
//   client:  y = d(Re[exp(-i theta) h])
//
// The secret (theta and the identity of I') never leaves the client. This
// is a simulation; the generator is not a cryptographic one.

#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "phasefort/network.hpp"
#include "phasefort/tensor_io.hpp"

namespace phasefort {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Client-only secret for one sample.
struct SecretRecord {
  double theta = 0.0;
  std::size_t fooling_index = 0;
};

/// What the server receives: nothing but the complex feature.
template <typename T>
struct EncryptedFeature {
  ComplexTensor<T> x;
};

/// Uniform on [0, 2 pi).
inline double sample_phase(Rng& rng) {
  const double t = rng.uniform(0.0, kTwoPi);
  return t < kTwoPi ? t : 0.0;
}

/// Uniform index in [0, n) other than i.
inline std::size_t choose_partner(std::size_t n, std::size_t i, Rng& rng) {
  if (n < 2) throw Error("a fooling counterpart needs a batch of at least two samples");
  if (i >= n) throw Error("sample index out of range");
  std::size_t j = rng.below(n - 1);
  return j >= i ? j + 1 : j;
}

template <typename T>
struct FoolingChoice {
  Tensor<T> b;
  std::size_t index = 0;
};

/// b = g(I') for a uniformly chosen batch member I' != I_i, taken from the
/// batch's already-encoded features `a_batch` (g is shared).
template <typename T>
FoolingChoice<T> pick_fooling(const Tensor<T>& a_batch, std::size_t i, Rng& rng) {
  const std::size_t j = choose_partner(a_batch.dim(0), i, rng);
  Tensor<T> b = a_batch.slice_batch(j, j + 1);
  Shape s = a_batch.shape();
  s.erase(s.begin());
  return {b.reshaped(s), j};
}

/// x = exp(i theta) (a + i b), per sample when theta has one entry per sample.
template <typename T>
EncryptedFeature<T> encrypt(const Tensor<T>& a, const Tensor<T>& b, std::span<const double> theta) {
  require_same_shape(a, b, "encrypt");
  return {rotate(ComplexTensor<T>(a, b), theta)};
}

template <typename T>
EncryptedFeature<T> encrypt(const Tensor<T>& a, const Tensor<T>& b, double theta) {
  const double t[1] = {theta};
  return encrypt(a, b, std::span<const double>(t, 1));
}

/// Re[exp(-i theta) h].
template <typename T>
Tensor<T> derotate_real(const ComplexTensor<T>& h, std::span<const double> theta) {
  std::vector<double> neg(theta.begin(), theta.end());
  for (auto& t : neg) t = -t;
  return real_part(rotate(h, std::span<const double>(neg)));
}

/// a' = Re[x exp(-i theta')]; equals a cos(d) - b sin(d) with d = theta* - theta'.
template <typename T>
Tensor<T> fake_decrypt(const ComplexTensor<T>& x, double theta_prime) {
  const double t[1] = {theta_prime};
  return derotate_real(x, std::span<const double>(t, 1));
}

/// a + gamma * eps, with eps standard Gaussian rescaled so that
/// mean|eps| == mean|a| over the whole tensor.
template <typename T>
Tensor<T> noise_like(const Tensor<T>& a, Rng& rng) {
  Tensor<T> eps = sample_gaussian<T>(rng, a.shape());
  const long double ma = mean_abs(a), me = mean_abs(eps);
  const T s = me > 0 ? static_cast<T>(ma / me) : T{0};
  for (auto& v : eps.data()) v *= s;
  return eps;
}

template <typename T>
Tensor<T> noisy_feature(const Tensor<T>& a, double gamma, Rng& rng) {
  if (gamma < 0) throw Error("noise level must be non-negative");
  if (gamma == 0) return a;
  Tensor<T> out = a;
  axpy(out, noise_like(a, rng), static_cast<T>(gamma));
  return out;
}

namespace ag {

/// Differentiable encryption of a batch: b is gathered from `partners`.
template <typename T>
Var<T> encrypt(const Var<T>& a, const std::vector<std::size_t>& partners, const std::vector<double>& theta) {
  Var<T> b = gather_batch(a, partners);
  return rotate(make_complex(a, b), theta);
}

/// Re[exp(-i theta) h].
template <typename T>
Var<T> decrypt(const Var<T>& h, const std::vector<double>& theta) {
  std::vector<double> neg(theta);
  for (auto& t : neg) t = -t;
  return real_part(rotate(h, neg));
}

}  // namespace ag

// ---------------------------------------------------------------------------
// Client / server API

template <typename T>
struct ClientRequest {
  EncryptedFeature<T> wire;
  std::vector<SecretRecord> secrets;  // stays on the client
};

/// Client half, step 1: encode a batch (n >= 2) and hide it.
template <typename T>
ClientRequest<T> client_encrypt(const Network<T>& net, const Tensor<T>& images, Rng& rng) {
  if (!net.division().complex_phi()) throw Error("client_encrypt needs the complex pipeline");
  Tape<T> t;
  Context<T> ctx;
  const Tensor<T> a = net.encode(t.constant(images), ctx).re();
  const std::size_t n = a.dim(0);
  ClientRequest<T> req;
  std::vector<std::size_t> partners(n);
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    partners[i] = choose_partner(n, i, rng);
    theta[i] = sample_phase(rng);
    req.secrets.push_back({theta[i], partners[i]});
  }
  Tensor<T> b = gather_batch(a, std::span<const std::size_t>(partners));
  req.wire = encrypt(a, b, std::span<const double>(theta));
  return req;
}

/// Server half: only sees the wire format.
template <typename T>
ComplexTensor<T> server_process(const Network<T>& net, const EncryptedFeature<T>& wire) {
  Tape<T> t;
  Context<T> ctx;
  return net.process(t.constant(wire.x), ctx).complex_value();
}

/// Client half, step 2: logits from the returned feature.
template <typename T>
Tensor<T> client_decrypt(const Network<T>& net, const ComplexTensor<T>& h,
                         const std::vector<SecretRecord>& secrets) {
  if (secrets.size() != h.shape()[0]) throw ShapeError("one secret per sample expected");
  std::vector<double> theta;
  for (const auto& s : secrets) theta.push_back(s.theta);
  Tape<T> t;
  Context<T> ctx;
  return net.decode_logits(t.constant(derotate_real(h, std::span<const double>(theta))), ctx).re();
}

/// Complete round trip with fixed phases and partners (used for audits).
template <typename T>
Tensor<T> secure_logits(const Network<T>& net, const Tensor<T>& images, const std::vector<double>& theta,
                        const std::vector<std::size_t>& partners) {
  Tape<T> t;
  Context<T> ctx;
  Var<T> a = net.encode(t.constant(images), ctx);
  Var<T> x = ag::encrypt(a, partners, theta);
  Var<T> h = net.process(x, ctx);
  return net.decode_logits(ag::decrypt(h, theta), ctx).re();
}

/// Serialized wire payload: two CVT1 tensors (real plane, imaginary plane).
template <typename T>
io::Bytes serialize(const EncryptedFeature<T>& f) {
  io::Bytes out;
  io::encode_tensor(out, f.x.re);
  io::encode_tensor(out, f.x.im);
  return out;
}

template <typename T>
EncryptedFeature<T> deserialize_feature(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  Tensor<T> re = io::decode_tensor<T>(r);
  Tensor<T> im = io::decode_tensor<T>(r);
  if (!r.done()) throw FormatError("trailing bytes after encrypted feature");
  return {ComplexTensor<T>(std::move(re), std::move(im))};
}

}  // namespace phasefort

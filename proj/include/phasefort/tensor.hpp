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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phasefort {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

/// Dense row-major real tensor. Shapes are (batch, channel, height, width)
/// for image-like data.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel_of(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + phasefort::to_string(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h,
              std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  Tensor reshaped(Shape shape) const {
    if (numel_of(shape) != numel()) {
      throw ShapeError("cannot reshape " + phasefort::to_string(shape_) +
                       " to " + phasefort::to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Samples [begin, end) along the leading axis.
  Tensor slice_batch(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || end > shape_[0] || begin > end) {
      throw ShapeError("bad batch slice");
    }
    const std::size_t per = numel() / std::max<std::size_t>(shape_[0], 1);
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s),
                  std::vector<T>(data_.begin() + begin * per,
                                 data_.begin() + end * per));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Complex tensor held as two parallel real planes.
template <typename T>
struct ComplexTensor {
  Tensor<T> re;
  Tensor<T> im;

  ComplexTensor() = default;
  explicit ComplexTensor(const Shape& shape) : re(shape), im(shape) {}
  ComplexTensor(Tensor<T> real, Tensor<T> imag)
      : re(std::move(real)), im(std::move(imag)) {
    if (re.shape() != im.shape()) {
      throw ShapeError("complex planes disagree: " + to_string(re.shape()) +
                       " vs " + to_string(im.shape()));
    }
  }

  const Shape& shape() const { return re.shape(); }
  std::size_t numel() const { return re.numel(); }

  template <typename U>
  ComplexTensor<U> cast() const {
    return ComplexTensor<U>(re.template cast<U>(), im.template cast<U>());
  }

  bool operator==(const ComplexTensor&) const = default;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
bool all_finite(const ComplexTensor<T>& t) {
  return all_finite(t.re) && all_finite(t.im);
}

template <typename T>
void require_finite(const Tensor<T>& t, const std::string& where) {
  if (!all_finite(t)) throw NumericError("non-finite value in " + where);
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

/// dst += alpha * src
template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T alpha = T{1}) {
  require_same_shape(dst, src, "axpy");
  T* d = dst.raw();
  const T* s = src.raw();
  for (std::size_t i = 0, n = dst.numel(); i < n; ++i) d[i] += alpha * s[i];
}

template <typename T>
T max_abs(const Tensor<T>& t) {
  T m{0};
  for (T v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
T mean_abs(const Tensor<T>& t) {
  if (t.empty()) return T{0};
  long double s = 0;
  for (T v : t.data()) s += std::abs(v);
  return static_cast<T>(s / static_cast<long double>(t.numel()));
}

template <typename T>
T sum(const Tensor<T>& t) {
  long double s = 0;
  for (T v : t.data()) s += v;
  return static_cast<T>(s);
}

/// Largest elementwise modulus.
template <typename T>
T max_modulus(const ComplexTensor<T>& t) {
  T m{0};
  for (std::size_t i = 0; i < t.numel(); ++i)
    m = std::max(m, std::hypot(t.re[i], t.im[i]));
  return m;
}

template <typename T>
T max_modulus_diff(const ComplexTensor<T>& a, const ComplexTensor<T>& b) {
  require_same_shape(a.re, b.re, "max_modulus_diff");
  T m{0};
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::hypot(a.re[i] - b.re[i], a.im[i] - b.im[i]));
  return m;
}

/// Concatenate along the leading axis.
template <typename T>
Tensor<T> concat_batch(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_batch of nothing");
  Shape s = parts[0].shape();
  std::vector<T> data;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() != s.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), s.begin() + 1)) {
      throw ShapeError("concat_batch: inconsistent shapes");
    }
    n += p.dim(0);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  s[0] = n;
  return Tensor<T>(std::move(s), std::move(data));
}

/// Rows `indices` of the leading axis, in order.
template <typename T>
Tensor<T> gather_batch(const Tensor<T>& t, std::span<const std::size_t> indices) {
  const std::size_t per = t.numel() / std::max<std::size_t>(t.dim(0), 1);
  Shape s = t.shape();
  s[0] = indices.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.dim(0)) throw ShapeError("gather_batch: index out of range");
    std::copy_n(t.raw() + indices[i] * per, per, out.raw() + i * per);
  }
  return out;
}

}  // namespace phasefort

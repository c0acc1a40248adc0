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

// CVT1 raw tensor dump:
//   "CVT1" | u8 dtype (0 = f32, 1 = f64) | u8 rank | rank x u32 extent |
//   row-major payload
// All integers and floats little-endian.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "phasefort/tensor.hpp"

namespace phasefort::io {

using Bytes = std::vector<std::uint8_t>;

inline constexpr char kTensorMagic[4] = {'C', 'V', 'T', '1'};

template <typename T>
constexpr std::uint8_t dtype_tag() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 0 : 1;
}

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_string(Bytes& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

/// Bounds-checked little-endian reader over a byte span.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) {
      throw FormatError("truncated input at byte offset " + std::to_string(pos_) +
                        ": need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint8_t u8() { return take(1)[0]; }

  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }

  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | s[static_cast<std::size_t>(i)];
    return v;
  }

  std::string string() {
    const std::uint32_t n = u32();
    auto s = take(n);
    return std::string(s.begin(), s.end());
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void encode_tensor(Bytes& out, const Tensor<T>& t) {
  out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
  put_u8(out, dtype_tag<T>());
  if (t.rank() > 255) throw FormatError("tensor rank too large for CVT1");
  put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > UINT32_MAX) throw FormatError("tensor extent too large for CVT1");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (T v : t.data()) {
    if constexpr (std::is_same_v<T, float>) {
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
}

template <typename T>
Bytes encode_tensor(const Tensor<T>& t) {
  Bytes out;
  encode_tensor(out, t);
  return out;
}

/// Decodes one CVT1 record, converting the payload to T if needed.
template <typename T>
Tensor<T> decode_tensor(Reader& r) {
  const std::size_t start = r.offset();
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kTensorMagic, 4) != 0) {
    throw FormatError("bad tensor magic at byte offset " + std::to_string(start));
  }
  const std::uint8_t tag = r.u8();
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
  const std::uint8_t rank = r.u8();
  Shape shape(rank);
  for (auto& d : shape) d = r.u32();
  Tensor<T> t(shape);
  for (auto& v : t.data()) {
    if (tag == 0) {
      v = static_cast<T>(std::bit_cast<float>(r.u32()));
    } else {
      v = static_cast<T>(std::bit_cast<double>(r.u64()));
    }
  }
  return t;
}

template <typename T>
Tensor<T> decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Tensor<T> t = decode_tensor<T>(r);
  if (!r.done()) throw FormatError("trailing bytes after tensor payload");
  return t;
}

}  // namespace phasefort::io

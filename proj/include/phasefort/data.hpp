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
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "phasefort/rng.hpp"
#include "phasefort/tensor.hpp"

namespace phasefort {

/// Images are (n, 3, h, w) in [0, 1].
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  std::size_t classes = 10;
  std::string split;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  template <typename T>
  Tensor<T> batch(std::span<const std::size_t> idx) const {
    return gather_batch(images, idx).template cast<T>();
  }
  std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(labels.at(i));
    return out;
  }

  /// First `n` samples.
  Dataset head(std::size_t n) const {
    n = std::min(n, size());
    return {images.slice_batch(0, n), std::vector<int>(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n)),
            classes, split};
  }
};

inline constexpr std::size_t kCifarRecord = 3073;

/// Parses the 3073-byte-record CIFAR-10 binary layout (1 label byte followed
/// by 1024 red, 1024 green, 1024 blue bytes).
inline Dataset parse_cifar(std::span<const std::uint8_t> bytes, const std::string& split = "") {
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t n = bytes.size() / kCifarRecord;
    throw FormatError("truncated CIFAR record at byte offset " + std::to_string(n * kCifarRecord) + ": " +
                      std::to_string(bytes.size() - n * kCifarRecord) + " of " + std::to_string(kCifarRecord) +
                      " bytes present");
  }
  const std::size_t n = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.split = split;
  ds.classes = 10;
  ds.images = Tensor<float>({n, 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] >= 10) {
      throw FormatError("label " + std::to_string(rec[0]) + " out of range at byte offset " +
                        std::to_string(r * kCifarRecord));
    }
    ds.labels[r] = rec[0];
    float* dst = ds.images.raw() + r * 3072;
    for (std::size_t i = 0; i < 3072; ++i) dst[i] = static_cast<float>(rec[1 + i]) / 255.0f;
  }
  return ds;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

/// `path` is either one binary batch file or the directory holding
/// data_batch_{1..5}.bin / test_batch.bin; `split` is "train" or "test".
inline Dataset load_cifar(const std::filesystem::path& path, const std::string& split) {
  if (split != "train" && split != "test") throw Error("split must be train or test");
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    if (split == "train") {
      for (int i = 1; i <= 5; ++i) files.push_back(path / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(path / "test_batch.bin");
    }
  } else {
    files.push_back(path);
  }
  std::vector<std::uint8_t> all;
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw Error("missing dataset file " + f.string());
    auto b = read_file(f);
    all.insert(all.end(), b.begin(), b.end());
  }
  return parse_cifar(all, split);
}

// ---------------------------------------------------------------------------
// Synthetic shapes

namespace synth_detail {

struct Rgb {
  float r, g, b;
};

inline constexpr std::array<Rgb, 10> kPalette = {{{0.90f, 0.15f, 0.15f},
                                                  {0.15f, 0.75f, 0.20f},
                                                  {0.20f, 0.30f, 0.95f},
                                                  {0.95f, 0.85f, 0.10f},
                                                  {0.85f, 0.20f, 0.85f},
                                                  {0.10f, 0.85f, 0.85f},
                                                  {0.95f, 0.55f, 0.10f},
                                                  {0.55f, 0.35f, 0.15f},
                                                  {0.95f, 0.95f, 0.95f},
                                                  {0.45f, 0.10f, 0.60f}}};

// Coverage test for shape `kind` centred at (cy, cx) with radius r.
inline bool inside(int kind, double y, double x, double cy, double cx, double r) {
  const double dy = y - cy, dx = x - cx;
  switch (kind % 5) {
    case 0: return dy * dy + dx * dx <= r * r;                                    // disk
    case 1: return std::abs(dy) <= r * 0.85 && std::abs(dx) <= r * 0.85;          // square
    case 2: return dy <= r * 0.8 && dy >= -r && std::abs(dx) <= (dy + r) * 0.6;   // triangle
    case 3: {                                                                     // ring
      const double d2 = dy * dy + dx * dx;
      return d2 <= r * r && d2 >= 0.36 * r * r;
    }
    default:                                                                      // cross
      return (std::abs(dy) <= r * 0.3 || std::abs(dx) <= r * 0.3) && std::abs(dy) <= r && std::abs(dx) <= r;
  }
}

}  // namespace synth_detail

/// Class-conditioned scenes: each class has its own shape, colour and
/// anchor position; every sample jitters position, size and colour and gets
/// a random background gradient plus a class-independent distractor blob.
inline Dataset synth_dataset(std::size_t n, std::size_t classes, std::size_t size, std::uint64_t seed,
                             const std::string& split = "") {
  if (classes < 2) throw Error("synthetic data needs at least two classes");
  if (n < classes) throw Error("synthetic data needs at least one sample per class");
  if (size < 16) throw Error("synthetic images must be at least 16 pixels wide");
  using namespace synth_detail;
  Rng rng(seed);
  Dataset ds;
  ds.classes = classes;
  ds.split = split;
  ds.images = Tensor<float>({n, 3, size, size});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % classes);
  rng.shuffle(ds.labels.begin(), ds.labels.end());

  const double s = static_cast<double>(size);
  const std::size_t plane = size * size;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = ds.labels[i];
    float* img = ds.images.raw() + i * 3 * plane;
    // background: low-contrast gradient in a random colour
    const Rgb bg{static_cast<float>(rng.uniform(0.1, 0.5)), static_cast<float>(rng.uniform(0.1, 0.5)),
                 static_cast<float>(rng.uniform(0.1, 0.5))};
    const double gy = rng.uniform(-0.2, 0.2), gx = rng.uniform(-0.2, 0.2);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double ramp = gy * (static_cast<double>(y) / s - 0.5) + gx * (static_cast<double>(x) / s - 0.5);
        img[y * size + x] = static_cast<float>(bg.r + ramp);
        img[plane + y * size + x] = static_cast<float>(bg.g + ramp);
        img[2 * plane + y * size + x] = static_cast<float>(bg.b + ramp);
      }
    // distractor
    {
      const double cy = rng.uniform(0.15, 0.85) * s, cx = rng.uniform(0.15, 0.85) * s;
      const double r = rng.uniform(0.06, 0.1) * s;
      const Rgb col{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                    static_cast<float>(rng.uniform())};
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          if (inside(0, static_cast<double>(y), static_cast<double>(x), cy, cx, r)) {
            img[y * size + x] = col.r;
            img[plane + y * size + x] = col.g;
            img[2 * plane + y * size + x] = col.b;
          }
    }
    // class object
    const double ang = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
    const double cy = s * (0.5 + 0.2 * std::sin(ang)) + rng.uniform(-0.08, 0.08) * s;
    const double cx = s * (0.5 + 0.2 * std::cos(ang)) + rng.uniform(-0.08, 0.08) * s;
    const double r = s * rng.uniform(0.17, 0.25);
    const Rgb base = kPalette[static_cast<std::size_t>(c) % kPalette.size()];
    const float jr = static_cast<float>(rng.uniform(-0.1, 0.1)), jg = static_cast<float>(rng.uniform(-0.1, 0.1)),
                jb = static_cast<float>(rng.uniform(-0.1, 0.1));
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        if (inside(c, static_cast<double>(y), static_cast<double>(x), cy, cx, r)) {
          img[y * size + x] = base.r + jr;
          img[plane + y * size + x] = base.g + jg;
          img[2 * plane + y * size + x] = base.b + jb;
        }
    for (std::size_t k = 0; k < 3 * plane; ++k) {
      img[k] = std::clamp(img[k] + static_cast<float>(0.03 * rng.gaussian()), 0.0f, 1.0f);
    }
  }
  return ds;
}

/// A fresh random permutation of [0, n).
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  rng.shuffle(p.begin(), p.end());
  return p;
}

}  // namespace phasefort

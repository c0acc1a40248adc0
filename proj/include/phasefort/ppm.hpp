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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "phasefort/tensor.hpp"

namespace phasefort {

/// Binary P6 encoding of a (3, h, w) image with values in [0, 1].
template <typename T>
std::vector<std::uint8_t> encode_ppm(const Tensor<T>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("PPM export needs a (3, h, w) image");
  const std::size_t h = img.dim(1), w = img.dim(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(img[(c * h + y) * w + x]), 0.0, 1.0);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
  return out;
}

/// One row per sample: original on the left, reconstruction on the right,
/// separated and framed by `gap` white pixels. Inputs are (n, 3, h, w).
template <typename T>
Tensor<T> comparison_grid(const Tensor<T>& originals, const Tensor<T>& reconstructions, std::size_t rows,
                          std::size_t gap = 2) {
  require_same_shape(originals, reconstructions, "comparison_grid");
  if (originals.rank() != 4 || originals.dim(1) != 3) throw ShapeError("comparison_grid needs (n, 3, h, w)");
  rows = std::min(rows, originals.dim(0));
  if (rows == 0) throw ShapeError("comparison_grid needs at least one image");
  const std::size_t h = originals.dim(2), w = originals.dim(3);
  const std::size_t H = rows * (h + gap) + gap, W = 2 * w + 3 * gap;
  Tensor<T> grid({3, H, W}, T{1});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t side = 0; side < 2; ++side) {
      const Tensor<T>& src = side == 0 ? originals : reconstructions;
      const std::size_t oy = gap + r * (h + gap), ox = gap + side * (w + gap);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            grid[(c * H + oy + y) * W + ox + x] = src[((r * 3 + c) * h + y) * w + x];
    }
  return grid;
}

template <typename T>
void write_ppm(const std::filesystem::path& path, const Tensor<T>& img) {
  const auto bytes = encode_ppm(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace phasefort

// Copyright 2026 The Udeer Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace udeer {

/// Row-major H x W array; element (r, c) is pixel row r, column c.
template <class T>
using Grid = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GridD = Grid<double>;
using GridB = Grid<bool>;
using GridU8 = Grid<std::uint8_t>;

/// Flat row-major view of a grid, for APIs that operate on contiguous storage.
template <class T>
Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> flat(const Grid<T>& g) {
  return Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(g.data(), g.size());
}

/// Interleaved 8-bit image (H x W x channels).
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int h, int w, int c)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, 0) {}

  std::uint8_t& at(int r, int c, int ch) {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  std::uint8_t at(int r, int c, int ch) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  bool operator==(const Image8&) const = default;
};

}  // namespace udeer

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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "udeer/grid.hpp"

namespace udeer {

/// Decoded PNG samples, widened to 16 bits when the file is 16-bit.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

PngData decode_png(std::span<const std::uint8_t> bytes);
PngData read_png(const std::filesystem::path& path);

/// 8-bit image, 1/3/4 channels.
std::vector<std::uint8_t> encode_png(const Image8& image);
/// 16-bit grayscale.
std::vector<std::uint8_t> encode_png16(const Grid<std::uint16_t>& gray);

void write_png(const std::filesystem::path& path, const Image8& image);
void write_png16(const std::filesystem::path& path, const Grid<std::uint16_t>& gray);

/// Converts to an 8-bit image with the requested channel count (1 or 3).
Image8 to_image8(const PngData& png, int channels);
/// Grayscale values scaled to [0, 1] (by 1/255 or 1/65535).
GridD to_unit_gray(const PngData& png);

}  // namespace udeer

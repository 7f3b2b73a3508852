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

#include "udeer/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

#include "udeer/error.hpp"
#include "udeer/kitti_io.hpp"

namespace udeer {
namespace {

struct MemoryReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (reader->pos + n > reader->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, reader->data + reader->pos, n);
  reader->pos += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_callback(png_structp) {}

// Rows are passed pre-serialized (16-bit samples already big-endian).
std::vector<std::uint8_t> encode_rows(int width, int height, int bit_depth, int color_type,
                                      const std::vector<std::uint8_t>& raw, std::size_t stride) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(ErrorCode::Io, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    rows[r] = const_cast<png_bytep>(raw.data() + static_cast<std::size_t>(r) * stride);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, write_callback, flush_callback);
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

PngData decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::Io, "not a PNG stream");
  }
  MemoryReader reader{bytes.data(), bytes.size(), 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(ErrorCode::Io, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  PngData out;
  std::vector<std::uint8_t> raw;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Io, "corrupt PNG stream");
  }
  png_set_read_fn(png, &reader, read_callback);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  raw.resize(stride * out.height);
  rows.resize(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = raw.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  for (int r = 0; r < out.height; ++r) {
    const std::uint8_t* row = raw.data() + r * stride;
    const std::size_t per_row = static_cast<std::size_t>(out.width) * out.channels;
    for (std::size_t i = 0; i < per_row; ++i) {
      out.samples[r * per_row + i] =
          out.bit_depth == 16 ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                              : row[i];
    }
  }
  return out;
}

PngData read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const Image8& image) {
  int color_type = 0;
  switch (image.channels) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw Error(ErrorCode::ShapeMismatch, "unsupported channel count");
  }
  return encode_rows(image.width, image.height, 8, color_type, image.pixels,
                     static_cast<std::size_t>(image.width) * image.channels);
}

std::vector<std::uint8_t> encode_png16(const Grid<std::uint16_t>& gray) {
  const int h = static_cast<int>(gray.rows());
  const int w = static_cast<int>(gray.cols());
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * w * 2);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = (static_cast<std::size_t>(r) * w + c) * 2;
      raw[i] = static_cast<std::uint8_t>(gray(r, c) >> 8);
      raw[i + 1] = static_cast<std::uint8_t>(gray(r, c) & 0xff);
    }
  }
  return encode_rows(w, h, 16, PNG_COLOR_TYPE_GRAY, raw, static_cast<std::size_t>(w) * 2);
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  write_file(path, encode_png(image));
}

void write_png16(const std::filesystem::path& path, const Grid<std::uint16_t>& gray) {
  write_file(path, encode_png16(gray));
}

Image8 to_image8(const PngData& png, int channels) {
  Image8 out(png.height, png.width, channels);
  const int shift = png.bit_depth == 16 ? 8 : 0;
  for (int r = 0; r < png.height; ++r) {
    for (int c = 0; c < png.width; ++c) {
      const std::size_t base = (static_cast<std::size_t>(r) * png.width + c) * png.channels;
      for (int ch = 0; ch < channels; ++ch) {
        // Gray sources replicate into every output channel; alpha is dropped.
        const int src = png.channels >= 3 ? std::min(ch, 2) : 0;
        out.at(r, c, ch) = static_cast<std::uint8_t>(png.samples[base + src] >> shift);
      }
    }
  }
  return out;
}

GridD to_unit_gray(const PngData& png) {
  GridD out(png.height, png.width);
  const double max_value = png.bit_depth == 16 ? 65535.0 : 255.0;
  for (int r = 0; r < png.height; ++r) {
    for (int c = 0; c < png.width; ++c) {
      out(r, c) = png.samples[(static_cast<std::size_t>(r) * png.width + c) * png.channels] / max_value;
    }
  }
  return out;
}

}  // namespace udeer

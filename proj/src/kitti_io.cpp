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

#include "udeer/kitti_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "udeer/error.hpp"
#include "udeer/png_io.hpp"

namespace udeer {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<double> parse_numbers(std::string_view values, std::string_view line) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < values.size()) {
    while (pos < values.size() && (values[pos] == ' ' || values[pos] == '\t')) ++pos;
    if (pos >= values.size()) break;
    std::size_t end = pos;
    while (end < values.size() && values[end] != ' ' && values[end] != '\t') ++end;
    std::string_view token = values.substr(pos, end - pos);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
      throw Error(ErrorCode::UnparsableNumber, std::string(line));
    }
    out.push_back(v);
    pos = end;
  }
  return out;
}

const std::vector<double>& require(const std::map<std::string, std::vector<double>>& entries,
                                   const std::string& key, std::size_t expected) {
  const auto it = entries.find(key);
  if (it == entries.end()) throw Error(ErrorCode::MissingKey, key);
  if (it->second.size() != expected) {
    throw Error(ErrorCode::WrongValueCount, key + ": expected " + std::to_string(expected) +
                                                ", got " + std::to_string(it->second.size()));
  }
  return it->second;
}

void append_row(std::string& out, const char* key, const double* values, int count) {
  out += key;
  out += ':';
  char buf[64];
  for (int i = 0; i < count; ++i) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), values[i]);
    out += ' ';
    out.append(buf, ptr);
  }
  out += '\n';
}

}  // namespace

bool CameraCalibration::is_consistent(double tol) const {
  if (!P.allFinite() || !R_rect.allFinite() || !T_velo_to_cam.allFinite()) return false;
  const Eigen::RowVector4d bottom(0, 0, 0, 1);
  if (R_rect.row(3) != bottom || T_velo_to_cam.row(3) != bottom) return false;
  const Eigen::Matrix3d r = R_rect.topLeftCorner<3, 3>();
  return ((r * r.transpose()) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol;
}

CameraCalibration parse_calibration(std::string_view text) {
  std::map<std::string, std::vector<double>> entries;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorCode::UnparsableNumber, std::string(line));
    const std::string key(trim(line.substr(0, colon)));
    if (key != "P2" && key != "R0_rect" && key != "Tr_velo_to_cam") continue;
    entries[key] = parse_numbers(line.substr(colon + 1), line);
  }

  CameraCalibration calib;
  const auto& p = require(entries, "P2", 12);
  const auto& r = require(entries, "R0_rect", 9);
  const auto& t = require(entries, "Tr_velo_to_cam", 12);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) calib.P(i, j) = p[i * 4 + j];
    for (int j = 0; j < 3; ++j) calib.R_rect(i, j) = r[i * 3 + j];
    for (int j = 0; j < 4; ++j) calib.T_velo_to_cam(i, j) = t[i * 4 + j];
  }
  return calib;
}

std::string serialize_calibration(const CameraCalibration& calib) {
  double p[12], r[9], t[12];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) p[i * 4 + j] = calib.P(i, j);
    for (int j = 0; j < 3; ++j) r[i * 3 + j] = calib.R_rect(i, j);
    for (int j = 0; j < 4; ++j) t[i * 4 + j] = calib.T_velo_to_cam(i, j);
  }
  std::string out;
  append_row(out, "P2", p, 12);
  append_row(out, "R0_rect", r, 9);
  append_row(out, "Tr_velo_to_cam", t, 12);
  return out;
}

PointCloud read_point_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw Error(ErrorCode::TruncatedRecord, "length " + std::to_string(bytes.size()));
  }
  PointCloud cloud;
  const auto n = static_cast<Eigen::Index>(bytes.size() / 16);
  cloud.points.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k) {
      std::uint32_t bits = 0;
      const auto* src = bytes.data() + i * 16 + k * 4;
      bits = static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
             (static_cast<std::uint32_t>(src[2]) << 16) | (static_cast<std::uint32_t>(src[3]) << 24);
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteInput, "point " + std::to_string(i));
      }
      cloud.points(i, k) = v;
    }
  }
  return cloud;
}

std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(cloud.size()) * 16);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(cloud.points(i, k)));
      auto* dst = out.data() + i * 16 + k * 4;
      dst[0] = bits & 0xff;
      dst[1] = (bits >> 8) & 0xff;
      dst[2] = (bits >> 16) & 0xff;
      dst[3] = (bits >> 24) & 0xff;
    }
  }
  return out;
}

GroundTruthMask decode_gt_mask(const Image8& rgb) {
  if (rgb.channels != 3) {
    throw Error(ErrorCode::ShapeMismatch,
                "ground truth needs 3 channels, got " + std::to_string(rgb.channels));
  }
  GroundTruthMask gt;
  gt.grid.resize(rgb.height, rgb.width);
  for (int r = 0; r < rgb.height; ++r) {
    for (int c = 0; c < rgb.width; ++c) {
      const bool blue = rgb.at(r, c, 2) > 127;
      const bool red = rgb.at(r, c, 0) > 127;
      gt.grid(r, c) = blue ? label::kRoad : (red ? label::kNonRoad : label::kInvalid);
    }
  }
  return gt;
}

Image8 encode_gt_mask(const GroundTruthMask& gt) {
  Image8 img(static_cast<int>(gt.grid.rows()), static_cast<int>(gt.grid.cols()), 3);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      const auto l = gt.grid(r, c);
      if (l == label::kInvalid) continue;
      img.at(r, c, 0) = 255;
      img.at(r, c, 2) = l == label::kRoad ? 255 : 0;
    }
  }
  return img;
}

RelativeDepthMap load_relative_depth(const GridD& grid) {
  if (!grid.allFinite()) throw Error(ErrorCode::NonFiniteInput, "relative depth grid");
  RelativeDepthMap out;
  if (grid.size() == 0) {
    out.grid = grid;
    return out;
  }
  const double lo = grid.minCoeff();
  const double hi = grid.maxCoeff();
  if (hi == lo) {
    out.grid = GridD::Zero(grid.rows(), grid.cols());
  } else {
    out.grid = (grid - lo) / (hi - lo);
  }
  return out;
}

std::string gt_stem(std::string_view frame_id) {
  const auto pos = frame_id.rfind('_');
  if (pos == std::string_view::npos) return std::string(frame_id) + "_road";
  return std::string(frame_id.substr(0, pos)) + "_road" + std::string(frame_id.substr(pos));
}

std::vector<std::string> list_frames(const std::filesystem::path& root) {
  std::vector<std::string> ids;
  const auto dir = root / "image_2";
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write " + path.string());
}

FrameBundle load_frame(const std::filesystem::path& root, const std::string& frame_id) {
  FrameBundle frame;
  frame.frame_id = frame_id;
  frame.image = to_image8(read_png(root / "image_2" / (frame_id + ".png")), 3);
  frame.cloud = read_point_cloud(read_file(root / "velodyne" / (frame_id + ".bin")));
  const auto calib_bytes = read_file(root / "calib" / (frame_id + ".txt"));
  frame.calib = parse_calibration(
      std::string_view(reinterpret_cast<const char*>(calib_bytes.data()), calib_bytes.size()));
  frame.depth = load_relative_depth(to_unit_gray(read_png(root / "depth" / (frame_id + ".png"))));
  if (frame.depth.grid.rows() != frame.image.height || frame.depth.grid.cols() != frame.image.width) {
    throw Error(ErrorCode::ShapeMismatch, frame_id + ": depth size differs from image");
  }
  const auto gt_path = root / "gt_image_2" / (gt_stem(frame_id) + ".png");
  if (std::filesystem::exists(gt_path)) {
    frame.gt = decode_gt_mask(to_image8(read_png(gt_path), 3));
    if (frame.gt->grid.rows() != frame.image.height || frame.gt->grid.cols() != frame.image.width) {
      throw Error(ErrorCode::ShapeMismatch, frame_id + ": ground truth size differs from image");
    }
  }
  return frame;
}

void save_frame(const std::filesystem::path& root, const FrameBundle& frame) {
  const auto& id = frame.frame_id;
  write_png(root / "image_2" / (id + ".png"), frame.image);
  write_file(root / "velodyne" / (id + ".bin"), write_point_cloud(frame.cloud));
  const std::string calib = serialize_calibration(frame.calib);
  write_file(root / "calib" / (id + ".txt"),
             std::span(reinterpret_cast<const std::uint8_t*>(calib.data()), calib.size()));
  Grid<std::uint16_t> depth16 =
      (frame.depth.grid * 65535.0).round().max(0.0).min(65535.0).cast<std::uint16_t>();
  write_png16(root / "depth" / (id + ".png"), depth16);
  if (frame.gt) write_png(root / "gt_image_2" / (gt_stem(id) + ".png"), encode_gt_mask(*frame.gt));
}

}  // namespace udeer

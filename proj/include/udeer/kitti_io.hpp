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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "udeer/grid.hpp"

namespace udeer {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

/// Camera model for one KITTI camera plus the LiDAR extrinsics.
/// A velodyne point x maps to pixels via P * R_rect * T_velo_to_cam * x.
struct CameraCalibration {
  Matrix34d P = Matrix34d::Zero();
  Eigen::Matrix4d R_rect = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d T_velo_to_cam = Eigen::Matrix4d::Identity();

  /// Rectification block orthonormal within tol, homogeneous bottom rows,
  /// all entries finite.
  bool is_consistent(double tol = 1e-6) const;
};

/// N x 4 rows of (x, y, z, reflectance).
struct PointCloud {
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> points;

  Eigen::Index size() const { return points.rows(); }
  bool operator==(const PointCloud& o) const {
    return points.rows() == o.points.rows() && (points.array() == o.points.array()).all();
  }
};

namespace label {
inline constexpr std::uint8_t kNonRoad = 0;
inline constexpr std::uint8_t kRoad = 1;
inline constexpr std::uint8_t kInvalid = 2;
}  // namespace label

struct GroundTruthMask {
  GridU8 grid;  // values from udeer::label

  GridB valid() const { return grid != label::kInvalid; }
  GridD road() const { return (grid == label::kRoad).cast<double>(); }
  Eigen::Index road_count() const { return (grid == label::kRoad).count(); }
};

struct RelativeDepthMap {
  GridD grid;  // in [0, 1]
};

struct FrameBundle {
  Image8 image;  // RGB
  PointCloud cloud;
  CameraCalibration calib;
  RelativeDepthMap depth;
  std::optional<GroundTruthMask> gt;
  std::string frame_id;
};

// Calibration text ("key: v1 v2 ..." per line). Unknown keys are ignored.
CameraCalibration parse_calibration(std::string_view text);
/// Writes P2, R0_rect and Tr_velo_to_cam with shortest round-trip formatting.
std::string serialize_calibration(const CameraCalibration& calib);

// Velodyne binary: little-endian float32 quads, no header.
PointCloud read_point_cloud(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud);

/// Road iff blue > 127; NonRoad iff blue <= 127 and red > 127; else Invalid.
GroundTruthMask decode_gt_mask(const Image8& rgb);
/// Inverse of decode_gt_mask: Road (255,0,255), NonRoad (255,0,0), Invalid black.
Image8 encode_gt_mask(const GroundTruthMask& gt);

/// Per-frame min-max normalization to [0, 1]; a constant grid maps to zeros.
RelativeDepthMap load_relative_depth(const GridD& grid);

// ---------------------------------------------------------------------------
// On-disk dataset layout (mirrors KITTI road):
//   <root>/image_2/<id>.png       RGB image
//   <root>/velodyne/<id>.bin      point cloud
//   <root>/calib/<id>.txt         calibration
//   <root>/depth/<id>.png         relative depth, 8- or 16-bit grayscale
//   <root>/gt_image_2/<cat>_road_<num>.png   ground truth (optional)

/// "um_000012" -> "um_road_000012"; ids without '_' get "_road" appended.
std::string gt_stem(std::string_view frame_id);

/// Sorted frame ids present under <root>/image_2 (empty when absent).
std::vector<std::string> list_frames(const std::filesystem::path& root);

FrameBundle load_frame(const std::filesystem::path& root, const std::string& frame_id);
void save_frame(const std::filesystem::path& root, const FrameBundle& frame);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace udeer

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

#include "udeer/grid.hpp"
#include "udeer/kitti_io.hpp"

namespace udeer {

struct ProjectedLidarImage {
  GridD altitude;  // velodyne z of the surviving point (m); 0 where !hit
  GridB hit;
  GridD range;  // camera-frame depth of the surviving point (m); 0 where !hit
};

struct AltitudeDifferenceMap {
  GridD grid;
  GridB valid;
};

enum class PointVisibility { InView, OutOfView, BehindCamera };

struct PointProjection {
  PointVisibility visibility = PointVisibility::BehindCamera;
  int u = -1;
  int v = -1;
  double depth = 0.0;  // camera-frame depth
};

inline constexpr double kMinCameraDepth = 1e-6;

/// Projects one velodyne point (x, y, z) through the calibration.
PointProjection project_point(const CameraCalibration& calib, const Eigen::Vector3d& xyz,
                              int height, int width);

/// Z-buffered projection onto an H x W grid. Nearest camera depth wins; ties
/// keep the earlier point.
ProjectedLidarImage project_points(const PointCloud& cloud, const CameraCalibration& calib,
                                   int height, int width);

/// D(p) = mean over hit neighbours q within Chebyshev `radius` of
/// |Z(p) - Z(q)| / |p - q|. Hit pixels without neighbours get 0.
AltitudeDifferenceMap altitude_difference(const ProjectedLidarImage& proj, int radius);

/// Fills each invalid pixel from the nearest valid pixel within Chebyshev
/// distance max_ring (row-major order breaks ties).
AltitudeDifferenceMap densify(const AltitudeDifferenceMap& adm, int max_ring);

/// Clips valid values to the [lo_pct, hi_pct] percentiles (linear
/// interpolation between order statistics) and maps them onto [0, 1].
AltitudeDifferenceMap normalize_adm(const AltitudeDifferenceMap& adm, double lo_pct,
                                    double hi_pct);

/// Linear-interpolated percentile of an unsorted sample, pct in [0, 100].
double percentile(std::vector<double> values, double pct);

struct AdaptConfig {
  int radius = 2;
  int max_ring = 8;
  double lo_pct = 2.0;
  double hi_pct = 98.0;
  double range_scale = kRangeScale;

  static constexpr double kRangeScale = 80.0;
};

/// Network-ready LiDAR channels on the image grid:
/// 0: normalized, densified ADM; 1: range / range_scale clipped to [0, 1];
/// 2: hit indicator.
struct LidarChannels {
  AltitudeDifferenceMap adm;  // normalized + densified
  ProjectedLidarImage projection;
  GridD adm_channel;
  GridD range_channel;
  GridD hit_channel;
};

LidarChannels adapt_lidar(const PointCloud& cloud, const CameraCalibration& calib, int height,
                          int width, const AdaptConfig& cfg);

/// Normalized ADM after the 16-bit quantization used by the PNG output.
Grid<std::uint16_t> quantize_adm(const AltitudeDifferenceMap& adm);

}  // namespace udeer

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

#include "udeer/lidar_adaptation.hpp"

#include <algorithm>
#include <cmath>

#include "udeer/error.hpp"

namespace udeer {

PointProjection project_point(const CameraCalibration& calib, const Eigen::Vector3d& xyz,
                              int height, int width) {
  PointProjection out;
  const Eigen::Vector4d velo(xyz.x(), xyz.y(), xyz.z(), 1.0);
  const Eigen::Vector4d cam = calib.R_rect * (calib.T_velo_to_cam * velo);
  out.depth = cam(2);
  if (!(cam(2) > kMinCameraDepth)) return out;
  const Eigen::Vector3d uvw = calib.P * cam;
  if (!(uvw(2) > 0.0)) return out;
  const double u = std::floor(uvw(0) / uvw(2));
  const double v = std::floor(uvw(1) / uvw(2));
  out.visibility = PointVisibility::OutOfView;
  if (u < 0.0 || v < 0.0 || u >= width || v >= height) return out;
  out.visibility = PointVisibility::InView;
  out.u = static_cast<int>(u);
  out.v = static_cast<int>(v);
  return out;
}

ProjectedLidarImage project_points(const PointCloud& cloud, const CameraCalibration& calib,
                                   int height, int width) {
  if (height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "image size must be >= 1");
  ProjectedLidarImage out;
  out.altitude = GridD::Zero(height, width);
  out.range = GridD::Zero(height, width);
  out.hit = GridB::Constant(height, width, false);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d xyz = cloud.points.row(i).head<3>().transpose();
    const PointProjection p = project_point(calib, xyz, height, width);
    if (p.visibility != PointVisibility::InView) continue;
    if (out.hit(p.v, p.u) && !(p.depth < out.range(p.v, p.u))) continue;
    out.hit(p.v, p.u) = true;
    out.range(p.v, p.u) = p.depth;
    out.altitude(p.v, p.u) = xyz.z();
  }
  return out;
}

AltitudeDifferenceMap altitude_difference(const ProjectedLidarImage& proj, int radius) {
  if (radius < 1) throw Error(ErrorCode::InvalidRadius, "radius " + std::to_string(radius));
  const auto h = static_cast<int>(proj.hit.rows());
  const auto w = static_cast<int>(proj.hit.cols());

  // Offsets with dx >= 0; each dx > 0 entry stands for the mirrored pair
  // (dy, dx) and (dy, -dx), summed together before accumulation so that the
  // result is exactly mirror-symmetric.
  struct Offset {
    int dy, dx;
    double dist;
  };
  std::vector<Offset> offsets;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = 0; dx <= radius; ++dx) {
      if (dy == 0 && dx == 0) continue;
      offsets.push_back({dy, dx, std::sqrt(static_cast<double>(dy * dy + dx * dx))});
    }
  }

  AltitudeDifferenceMap out;
  out.grid = GridD::Zero(h, w);
  out.valid = proj.hit;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (!proj.hit(r, c)) continue;
      const double z = proj.altitude(r, c);
      double total = 0.0;
      int count = 0;
      auto term = [&](int rr, int cc, double dist) {
        if (rr < 0 || rr >= h || cc < 0 || cc >= w || !proj.hit(rr, cc)) return 0.0;
        ++count;
        return std::abs(z - proj.altitude(rr, cc)) / dist;
      };
      for (const auto& o : offsets) {
        const double a = term(r + o.dy, c + o.dx, o.dist);
        const double b = o.dx > 0 ? term(r + o.dy, c - o.dx, o.dist) : 0.0;
        total += a + b;
      }
      out.grid(r, c) = count > 0 ? total / count : 0.0;
    }
  }
  return out;
}

AltitudeDifferenceMap densify(const AltitudeDifferenceMap& adm, int max_ring) {
  if (max_ring < 0) throw Error(ErrorCode::InvalidArgument, "max_ring must be >= 0");
  const auto h = static_cast<int>(adm.grid.rows());
  const auto w = static_cast<int>(adm.grid.cols());
  AltitudeDifferenceMap out = adm;
  if (max_ring == 0) return out;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (adm.valid(r, c)) continue;
      out.grid(r, c) = 0.0;
      bool found = false;
      for (int d = 1; d <= max_ring && !found; ++d) {
        // Ring at Chebyshev distance d, visited in row-major order.
        for (int rr = r - d; rr <= r + d && !found; ++rr) {
          if (rr < 0 || rr >= h) continue;
          const bool edge_row = rr == r - d || rr == r + d;
          const int step = edge_row ? 1 : 2 * d;
          for (int cc = c - d; cc <= c + d; cc += step) {
            if (cc < 0 || cc >= w || !adm.valid(rr, cc)) continue;
            out.grid(r, c) = adm.grid(rr, cc);
            out.valid(r, c) = true;
            found = true;
            break;
          }
        }
      }
    }
  }
  return out;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw Error(ErrorCode::EmptyValidSet, "percentile of empty sample");
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo_index = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo_index);
  std::nth_element(values.begin(), values.begin() + lo_index, values.end());
  const double lo = values[lo_index];
  if (frac == 0.0 || lo_index + 1 >= values.size()) return lo;
  const double hi = *std::min_element(values.begin() + lo_index + 1, values.end());
  return lo + frac * (hi - lo);
}

AltitudeDifferenceMap normalize_adm(const AltitudeDifferenceMap& adm, double lo_pct,
                                    double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0)) {
    throw Error(ErrorCode::InvalidArgument, "need 0 <= lo_pct < hi_pct <= 100");
  }
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(adm.valid.count()));
  for (Eigen::Index i = 0; i < adm.grid.size(); ++i) {
    if (adm.valid.data()[i]) values.push_back(adm.grid.data()[i]);
  }
  if (values.empty()) throw Error(ErrorCode::EmptyValidSet, "no valid pixels to normalize");
  const double lo = percentile(values, lo_pct);
  const double hi = percentile(std::move(values), hi_pct);

  AltitudeDifferenceMap out;
  out.valid = adm.valid;
  out.grid = GridD::Zero(adm.grid.rows(), adm.grid.cols());
  if (hi == lo) return out;
  for (Eigen::Index i = 0; i < adm.grid.size(); ++i) {
    if (!adm.valid.data()[i]) continue;
    out.grid.data()[i] = (std::clamp(adm.grid.data()[i], lo, hi) - lo) / (hi - lo);
  }
  return out;
}

LidarChannels adapt_lidar(const PointCloud& cloud, const CameraCalibration& calib, int height,
                          int width, const AdaptConfig& cfg) {
  LidarChannels out;
  out.projection = project_points(cloud, calib, height, width);
  AltitudeDifferenceMap adm = altitude_difference(out.projection, cfg.radius);
  if (adm.valid.any()) {
    adm = normalize_adm(adm, cfg.lo_pct, cfg.hi_pct);
  }
  out.adm = densify(adm, cfg.max_ring);
  out.adm_channel = out.adm.grid;
  out.range_channel = (out.projection.range / cfg.range_scale).min(1.0);
  out.hit_channel = out.projection.hit.cast<double>();
  return out;
}

Grid<std::uint16_t> quantize_adm(const AltitudeDifferenceMap& adm) {
  Grid<std::uint16_t> out(adm.grid.rows(), adm.grid.cols());
  for (Eigen::Index i = 0; i < adm.grid.size(); ++i) {
    const double v = adm.valid.data()[i] ? std::clamp(adm.grid.data()[i], 0.0, 1.0) : 0.0;
    out.data()[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  return out;
}

}  // namespace udeer

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

#include "udeer/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "udeer/error.hpp"
#include "udeer/rng.hpp"

namespace udeer {
namespace {

using Vec3 = Eigen::Vector3d;
using Color = std::array<double, 3>;

constexpr double kGroundZ = -1.73;  // velodyne frame, sensor at origin
constexpr double kCameraFarLimit = 200.0;
constexpr int kBeams = 64;
constexpr int kFrontColumns = 600;
constexpr int kRearColumns = 120;
constexpr double kTopSlope = 0.035;
constexpr double kBottomSlope = -0.46;

enum class Surface { None, Road, Grass, Curb, Box };

struct Box {
  Vec3 lo, hi;
  Color color;
};

struct Scene {
  double curb = 0.15;
  double road_a = 0.0, road_b = 0.0, road_c = 0.0;
  double half_width = 4.0;
  Color road_color{}, grass_color{};
  std::vector<Box> boxes;
  std::uint64_t texture_key = 0;

  double center(double x) const { return road_a + x * (road_b + x * road_c); }
  bool on_road(double x, double y) const { return std::abs(y - center(x)) < half_width; }
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Surface surface = Surface::None;
  int box = -1;
  int axis = -1;  // box face normal axis
};

Scene make_scene(std::uint64_t seed, int obstacle_count) {
  CounterRng rng(hash_combine(seed, 0x5343454e45ULL));
  Scene s;
  s.road_a = rng.uniform(-1.5, 1.5);
  s.road_b = rng.uniform(-0.06, 0.06);
  s.road_c = rng.uniform(-0.0015, 0.0015);
  s.half_width = rng.uniform(3.0, 5.0);
  s.curb = rng.uniform(0.10, 0.20);
  const double gray = rng.uniform(70.0, 120.0);
  s.road_color = {gray, gray, gray + 5.0};
  s.grass_color = {rng.uniform(55.0, 95.0), rng.uniform(95.0, 140.0), rng.uniform(35.0, 70.0)};
  s.texture_key = rng.next_u64();
  for (int i = 0; i < obstacle_count; ++i) {
    const double x = rng.uniform(7.0, 45.0);
    const bool on_road = rng.uniform() < 0.5;
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double y = on_road ? s.center(x) + rng.uniform(-0.5, 0.5) * s.half_width
                             : s.center(x) + side * (s.half_width + rng.uniform(1.0, 6.0));
    const double lx = rng.uniform(1.5, 4.5);
    const double ly = rng.uniform(1.2, 2.2);
    const double lz = rng.uniform(1.0, 2.5);
    const double base = s.on_road(x, y) ? kGroundZ : kGroundZ + s.curb;
    Box b;
    b.lo = Vec3(x - lx / 2, y - ly / 2, base);
    b.hi = Vec3(x + lx / 2, y + ly / 2, base + lz);
    b.color = {rng.uniform(20.0, 230.0), rng.uniform(20.0, 230.0), rng.uniform(20.0, 230.0)};
    s.boxes.push_back(b);
  }
  return s;
}

Hit cast_ray(const Scene& s, const Vec3& o, const Vec3& d, double t_max) {
  Hit best;
  if (d.z() < 0.0) {
    const double t_top = (kGroundZ + s.curb - o.z()) / d.z();
    const double t_road = (kGroundZ - o.z()) / d.z();
    const Vec3 p_top = o + t_top * d;
    if (!s.on_road(p_top.x(), p_top.y())) {
      best = {t_top, Surface::Grass};
    } else {
      const Vec3 p_road = o + t_road * d;
      if (s.on_road(p_road.x(), p_road.y())) {
        best = {t_road, Surface::Road};
      } else {
        // Passes over the road, then meets a curb face in between.
        double lo = t_top, hi = t_road;
        for (int i = 0; i < 48; ++i) {
          const double mid = 0.5 * (lo + hi);
          const Vec3 p = o + mid * d;
          (s.on_road(p.x(), p.y()) ? lo : hi) = mid;
        }
        best = {hi, Surface::Curb};
      }
    }
  }
  for (std::size_t i = 0; i < s.boxes.size(); ++i) {
    const Box& b = s.boxes[i];
    double t0 = 0.0, t1 = best.t;
    int axis = -1;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (d[a] == 0.0) {
        miss = o[a] < b.lo[a] || o[a] > b.hi[a];
        continue;
      }
      double near = (b.lo[a] - o[a]) / d[a];
      double far = (b.hi[a] - o[a]) / d[a];
      if (near > far) std::swap(near, far);
      if (near > t0) {
        t0 = near;
        axis = a;
      }
      t1 = std::min(t1, far);
      miss = t0 > t1;
    }
    if (!miss && axis >= 0 && t0 > 1e-9 && t0 < best.t) {
      best = {t0, Surface::Box, static_cast<int>(i), axis};
    }
  }
  if (best.t > t_max) best = Hit{};
  return best;
}

double texture(const Scene& s, double x, double y, double cell, std::uint64_t salt) {
  const auto ix = static_cast<std::int64_t>(std::floor(x / cell));
  const auto iy = static_cast<std::int64_t>(std::floor(y / cell));
  return to_unit(hash_combine(hash_combine(s.texture_key ^ salt, static_cast<std::uint64_t>(ix)),
                              static_cast<std::uint64_t>(iy)));
}

Color sky_color(double row_fraction) {
  const double k = std::clamp(row_fraction, 0.0, 1.0);
  return {120.0 + 60.0 * k, 160.0 + 40.0 * k, 225.0 + 10.0 * k};
}

Color shade(const Scene& s, const Hit& hit, const Vec3& p) {
  switch (hit.surface) {
    case Surface::Road: {
      if (std::abs(p.y() - s.center(p.x())) < 0.07 && static_cast<std::int64_t>(std::floor(p.x() / 3.0)) % 2 == 0) {
        return {225.0, 225.0, 215.0};
      }
      const double k = 0.9 + 0.2 * texture(s, p.x(), p.y(), 0.25, 1);
      return {s.road_color[0] * k, s.road_color[1] * k, s.road_color[2] * k};
    }
    case Surface::Grass: {
      const double k = 0.75 + 0.5 * texture(s, p.x(), p.y(), 0.15, 2);
      return {s.grass_color[0] * k, s.grass_color[1] * k, s.grass_color[2] * k};
    }
    case Surface::Curb: return {170.0, 168.0, 160.0};
    case Surface::Box: {
      const Color& c = s.boxes[hit.box].color;
      const double k = hit.axis == 2 ? 1.0 : (hit.axis == 1 ? 0.8 : 0.65);
      return {c[0] * k, c[1] * k, c[2] * k};
    }
    case Surface::None: break;
  }
  return {0.0, 0.0, 0.0};
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

double reflectance_of(Surface surface) {
  switch (surface) {
    case Surface::Road: return 0.25;
    case Surface::Grass: return 0.55;
    case Surface::Curb: return 0.4;
    case Surface::Box: return 0.7;
    case Surface::None: break;
  }
  return 0.0;
}

}  // namespace

CameraCalibration synth_calibration(int height, int width) {
  CameraCalibration c;
  const double f = 0.58 * width;
  c.P << f, 0.0, 0.5 * width, 0.0,
         0.0, f, 0.46 * height, 0.0,
         0.0, 0.0, 1.0, 0.0;
  // Slight pitch in the rectifying rotation (0.005 rad).
  constexpr double ca = 0.9999875000260416;
  constexpr double sa = 0.004999979166692708;
  c.R_rect << 1.0, 0.0, 0.0, 0.0,
              0.0, ca, -sa, 0.0,
              0.0, sa, ca, 0.0,
              0.0, 0.0, 0.0, 1.0;
  // Velodyne (x fwd, y left, z up) to camera (x right, y down, z fwd).
  c.T_velo_to_cam << 0.0, -1.0, 0.0, 0.0,
                     0.0, 0.0, -1.0, -0.08,
                     1.0, 0.0, 0.0, -0.27,
                     0.0, 0.0, 0.0, 1.0;
  return c;
}

SynthRender synth_scene_render(std::uint64_t seed, const SynthConfig& cfg) {
  if (cfg.height < 32 || cfg.width < 32) {
    throw Error(ErrorCode::DegenerateConfig, "synthetic frames need H, W >= 32");
  }
  if (cfg.obstacle_count < 0 || !(cfg.noise_level >= 0.0)) {
    throw Error(ErrorCode::DegenerateConfig, "obstacle_count and noise_level must be >= 0");
  }
  const int h = cfg.height, w = cfg.width;
  const Scene scene = make_scene(seed, cfg.obstacle_count);
  const CameraCalibration calib = synth_calibration(h, w);

  const Eigen::Matrix3d rot = calib.T_velo_to_cam.topLeftCorner<3, 3>();
  const Vec3 trans = calib.T_velo_to_cam.topRightCorner<3, 1>();
  const Eigen::Matrix3d rect = calib.R_rect.topLeftCorner<3, 3>();
  const Vec3 cam_origin = -rot.transpose() * trans;
  const Eigen::Matrix3d to_velo = rot.transpose() * rect.transpose();
  const double fx = calib.P(0, 0), cx = calib.P(0, 2), fy = calib.P(1, 1), cy = calib.P(1, 2);

  SynthRender out;
  FrameBundle& frame = out.frame;
  frame.frame_id = "synth_" + std::to_string(seed);
  frame.calib = calib;
  frame.image = Image8(h, w, 3);
  out.depth_buffer.resize(h, w);
  GroundTruthMask gt;
  gt.grid.resize(h, w);
  CounterRng pixel_noise(hash_combine(seed, 0x504958454cULL));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      // Rectified-camera ray with unit z, so the hit parameter is camera depth.
      const Vec3 ray_rect((c + 0.5 - cx) / fx, (r + 0.5 - cy) / fy, 1.0);
      const Vec3 dir = to_velo * ray_rect;
      const Hit hit = cast_ray(scene, cam_origin, dir, kCameraFarLimit);
      const Color sky = sky_color(static_cast<double>(r) / h);
      Color color = sky;
      if (hit.surface != Surface::None) {
        const Vec3 p = cam_origin + hit.t * dir;
        color = shade(scene, hit, p);
        const double fog = std::min(hit.t / kCameraFarLimit, 0.6);
        for (int k = 0; k < 3; ++k) color[k] = color[k] * (1.0 - fog) + sky[k] * fog;
      }
      for (int k = 0; k < 3; ++k) {
        const double noise = (2.0 * pixel_noise.uniform() - 1.0) * cfg.noise_level * 30.0;
        frame.image.at(r, c, k) = to_byte(color[k] + noise);
      }
      gt.grid(r, c) = hit.surface == Surface::Road ? label::kRoad : label::kNonRoad;
      out.depth_buffer(r, c) = std::min(hit.t, kSynthFarLimit);
    }
  }
  frame.gt = std::move(gt);
  // Stored at 16-bit precision so the bundle survives a PNG round trip exactly.
  const RelativeDepthMap rel = load_relative_depth(out.depth_buffer);
  frame.depth.grid = (rel.grid * 65535.0).round() / 65535.0;

  CounterRng lidar_noise(hash_combine(seed, 0x4c49444152ULL));
  std::vector<std::array<float, 4>> points;
  points.reserve(static_cast<std::size_t>(kBeams) * (kFrontColumns + kRearColumns));
  const Vec3 lidar_origin = Vec3::Zero();
  for (int b = 0; b < kBeams; ++b) {
    const double slope = kTopSlope + (kBottomSlope - kTopSlope) * b / (kBeams - 1);
    for (int j = 0; j < kFrontColumns + kRearColumns; ++j) {
      const bool front = j < kFrontColumns;
      const double az = front ? -1.2 + 2.4 * j / (kFrontColumns - 1)
                              : -1.2 + 2.4 * (j - kFrontColumns) / (kRearColumns - 1);
      const Vec3 dir(front ? 1.0 : -1.0, az, slope);
      const double norm = dir.norm();
      const Hit hit = cast_ray(scene, lidar_origin, dir, kSynthFarLimit / norm);
      if (hit.surface == Surface::None) continue;
      const double t = hit.t + cfg.noise_level * 0.02 * lidar_noise.gaussianish() / norm;
      Vec3 p = lidar_origin + t * dir;
      if (hit.surface == Surface::Grass) p.z() += 0.04 * (lidar_noise.uniform() - 0.5);
      const double refl =
          std::clamp(reflectance_of(hit.surface) + 0.1 * (2.0 * lidar_noise.uniform() - 1.0), 0.0, 1.0);
      points.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()),
                        static_cast<float>(p.z()), static_cast<float>(refl)});
    }
  }
  frame.cloud.points.resize(static_cast<Eigen::Index>(points.size()), 4);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int k = 0; k < 4; ++k) frame.cloud.points(static_cast<Eigen::Index>(i), k) = points[i][k];
  }
  return out;
}

FrameBundle synth_scene(std::uint64_t seed, const SynthConfig& cfg) {
  return synth_scene_render(seed, cfg).frame;
}

}  // namespace udeer

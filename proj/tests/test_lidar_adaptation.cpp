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

#include <gtest/gtest.h>

#include <Eigen/Geometry>

#include "support.hpp"
#include "udeer/error.hpp"
#include "udeer/lidar_adaptation.hpp"
#include "udeer/synth.hpp"

namespace udeer {
namespace {

CameraCalibration identity_calibration() {
  CameraCalibration c;
  c.P.leftCols<3>().setIdentity();
  return c;
}

/// Pinhole camera with a generic rotation and translation.
CameraCalibration random_calibration(CounterRng& rng, int height, int width) {
  CameraCalibration c = synth_calibration(height, width);
  const double a = rng.uniform(-0.1, 0.1), b = rng.uniform(-0.1, 0.1);
  Eigen::Matrix3d R = (Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()) *
                       Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY())).toRotationMatrix();
  c.R_rect.topLeftCorner<3, 3>() = R;
  c.T_velo_to_cam(0, 3) = rng.uniform(-0.5, 0.5);
  c.T_velo_to_cam(1, 3) = rng.uniform(-0.5, 0.5);
  return c;
}

ProjectedLidarImage full_hit(const GridD& altitude) {
  ProjectedLidarImage p;
  p.altitude = altitude;
  p.hit = GridB::Constant(altitude.rows(), altitude.cols(), true);
  p.range = GridD::Constant(altitude.rows(), altitude.cols(), 10.0);
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

TEST(Projection, PrincipalAxisPointLandsAtOrigin) {
  PointCloud pc;
  pc.points.resize(1, 4);
  pc.points << 0.0, 0.0, 10.0, 1.0;
  const auto img = project_points(pc, identity_calibration(), 4, 4);
  EXPECT_TRUE(img.hit(0, 0));
  EXPECT_EQ(img.range(0, 0), 10.0);
  EXPECT_EQ(img.altitude(0, 0), 10.0);
  EXPECT_EQ(img.hit.count(), 1);
}

TEST(Projection, PointBehindCameraIsDiscarded) {
  PointCloud pc;
  pc.points.resize(1, 4);
  pc.points << 0.0, 0.0, -1.0, 1.0;
  const auto img = project_points(pc, identity_calibration(), 4, 4);
  EXPECT_EQ(img.hit.count(), 0);
  EXPECT_EQ(project_point(identity_calibration(), {0.0, 0.0, -1.0}, 4, 4).visibility,
            PointVisibility::BehindCamera);
}

TEST(Projection, EmptyCloudGivesAllMiss) {
  const auto img = project_points(PointCloud{}, identity_calibration(), 3, 5);
  EXPECT_EQ(img.hit.count(), 0);
  EXPECT_TRUE((img.range == 0.0).all());
}

TEST(Projection, RandomPointsMatchBruteForceOracle) {
  constexpr int H = 24, W = 40;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CounterRng rng(seed);
    const CameraCalibration calib = random_calibration(rng, H, W);
    PointCloud pc;
    pc.points.resize(100, 4);
    for (Eigen::Index i = 0; i < 100; ++i) {
      // Mostly in front of the camera, some behind or off to the side.
      pc.points.row(i) << rng.uniform(-5.0, 30.0), rng.uniform(-15.0, 15.0), rng.uniform(-3.0, 3.0), 0.5;
    }
    // Duplicated points exercise the tie rule.
    pc.points.row(99) = pc.points.row(10);
    const auto img = project_points(pc, calib, H, W);
    const auto oracle = testing::projection_oracle(pc, calib, H, W);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const auto& o = oracle[static_cast<std::size_t>(r) * W + c];
        ASSERT_EQ(img.hit(r, c), o.hit) << r << "," << c;
        if (!o.hit) continue;
        EXPECT_NEAR(img.range(r, c), o.depth, 1e-9);
        EXPECT_EQ(img.altitude(r, c), pc.points(static_cast<Eigen::Index>(o.index), 2));
      }
  }
}

TEST(AltitudeDifference, FlatPlaneIsZero) {
  const auto adm = altitude_difference(full_hit(GridD::Constant(6, 7, -1.73)), 2);
  EXPECT_TRUE((adm.grid == 0.0).all());
  EXPECT_TRUE(adm.valid.all());
}

TEST(AltitudeDifference, ConstantOffsetLeavesMapUnchanged) {
  CounterRng rng(3);
  const GridD z = testing::random_grid(rng, 9, 11, -1.0, 1.0);
  const auto a = altitude_difference(full_hit(z), 2);
  const auto b = altitude_difference(full_hit(z + 0.75), 2);
  // 0.75 is exact in binary and z + 0.75 stays within [-0.25, 1.75], so the
  // differences are bit-identical.
  EXPECT_TRUE((a.grid == b.grid).all());
}

TEST(AltitudeDifference, RaisedPixelMatchesDoubleLoop) {
  GridD z = GridD::Zero(5, 5);
  z(2, 2) = 1.0;
  const auto proj = full_hit(z);
  const auto adm = altitude_difference(proj, 1);
  const GridD expected = testing::adm_oracle(proj.altitude, proj.hit, 1);
  EXPECT_NEAR(adm.grid(2, 2), (4.0 + 4.0 / std::sqrt(2.0)) / 8.0, 1e-12);
  EXPECT_EQ(adm.grid(0, 0), 0.0);
  for (Eigen::Index i = 0; i < z.size(); ++i) EXPECT_NEAR(adm.grid.data()[i], expected.data()[i], 1e-12);
}

TEST(AltitudeDifference, RandomSparseGridsMatchDoubleLoop) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CounterRng rng(seed);
    ProjectedLidarImage proj = full_hit(testing::random_grid(rng, 16, 16, -2.0, 2.0));
    for (Eigen::Index i = 0; i < proj.hit.size(); ++i) proj.hit.data()[i] = rng.uniform() < 0.6;
    for (int radius : {1, 2, 3}) {
      const auto adm = altitude_difference(proj, radius);
      const GridD expected = testing::adm_oracle(proj.altitude, proj.hit, radius);
      EXPECT_TRUE((adm.valid == proj.hit).all());
      EXPECT_LT((adm.grid - expected).abs().maxCoeff(), 1e-12);
    }
  }
}

TEST(AltitudeDifference, RadiusBelowOneIsInvalid) {
  EXPECT_EQ(code_of([] { altitude_difference(full_hit(GridD::Zero(3, 3)), 0); }), ErrorCode::InvalidRadius);
}

TEST(Densify, FullyValidAndZeroRingAreNoOps) {
  CounterRng rng(4);
  AltitudeDifferenceMap adm{testing::random_grid(rng, 6, 6), GridB::Constant(6, 6, true)};
  auto out = densify(adm, 5);
  EXPECT_TRUE((out.grid == adm.grid).all());
  for (Eigen::Index i = 0; i < adm.valid.size(); ++i) adm.valid.data()[i] = rng.uniform() < 0.3;
  out = densify(adm, 0);
  EXPECT_TRUE((out.grid == adm.grid).all());
  EXPECT_TRUE((out.valid == adm.valid).all());
}

TEST(Densify, SingleSourceFillsWholeGrid) {
  AltitudeDifferenceMap adm{GridD::Zero(9, 13), GridB::Constant(9, 13, false)};
  adm.grid(3, 4) = 0.625;
  adm.valid(3, 4) = true;
  const auto out = densify(adm, 100);
  const auto dist = testing::bfs_distance(adm.valid);
  for (Eigen::Index i = 0; i < adm.grid.size(); ++i) {
    ASSERT_GE(dist.data()[i], 0);
    EXPECT_TRUE(out.valid.data()[i]);
    EXPECT_EQ(out.grid.data()[i], 0.625);
  }
}

TEST(Densify, SparseSourcesTakeNearestValueWithinRing) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CounterRng rng(seed);
    AltitudeDifferenceMap adm{testing::random_grid(rng, 20, 24), GridB(20, 24)};
    for (Eigen::Index i = 0; i < adm.valid.size(); ++i) adm.valid.data()[i] = rng.uniform() < 0.04;
    const int ring = 3;
    const auto out = densify(adm, ring);
    const auto dist = testing::bfs_distance(adm.valid);
    for (Eigen::Index r = 0; r < 20; ++r)
      for (Eigen::Index c = 0; c < 24; ++c) {
        const int d = dist(r, c);
        if (d < 0 || d > ring) {
          EXPECT_FALSE(out.valid(r, c));
          continue;
        }
        ASSERT_TRUE(out.valid(r, c));
        // First valid pixel in row-major order on the nearest ring.
        double expected = std::nan("");
        for (Eigen::Index rr = r - d; rr <= r + d && std::isnan(expected); ++rr)
          for (Eigen::Index cc = c - d; cc <= c + d; ++cc) {
            if (rr < 0 || cc < 0 || rr >= 20 || cc >= 24) continue;
            if (std::max(std::abs(rr - r), std::abs(cc - c)) != d || !adm.valid(rr, cc)) continue;
            expected = adm.grid(rr, cc);
            break;
          }
        EXPECT_EQ(out.grid(r, c), expected) << r << "," << c;
      }
  }
}

TEST(Normalize, ConstantValuesMapToZero) {
  const AltitudeDifferenceMap adm{GridD::Constant(3, 3, 0.4), GridB::Constant(3, 3, true)};
  EXPECT_TRUE((normalize_adm(adm, 2, 98).grid == 0.0).all());
}

TEST(Normalize, FullRangeEndpoints) {
  AltitudeDifferenceMap adm{GridD(1, 3), GridB::Constant(1, 3, true)};
  adm.grid << 0.0, 2.0, 4.0;
  const auto out = normalize_adm(adm, 0, 100);
  EXPECT_EQ(out.grid(0, 0), 0.0);
  EXPECT_EQ(out.grid(0, 1), 0.5);
  EXPECT_EQ(out.grid(0, 2), 1.0);
}

TEST(Normalize, RandomGridMatchesSortedPercentiles) {
  CounterRng rng(8);
  AltitudeDifferenceMap adm{testing::random_grid(rng, 17, 19, 0.0, 3.0), GridB(17, 19)};
  std::vector<double> valid_values;
  for (Eigen::Index i = 0; i < adm.valid.size(); ++i) {
    adm.valid.data()[i] = rng.uniform() < 0.7;
    if (adm.valid.data()[i]) valid_values.push_back(adm.grid.data()[i]);
  }
  const double lo = testing::percentile_oracle(valid_values, 2.0);
  const double hi = testing::percentile_oracle(valid_values, 98.0);
  EXPECT_NEAR(percentile(valid_values, 2.0), lo, 1e-12);
  EXPECT_NEAR(percentile(valid_values, 98.0), hi, 1e-12);
  const auto out = normalize_adm(adm, 2.0, 98.0);
  for (Eigen::Index i = 0; i < adm.grid.size(); ++i) {
    if (!adm.valid.data()[i]) continue;
    const double expected = std::clamp((adm.grid.data()[i] - lo) / (hi - lo), 0.0, 1.0);
    EXPECT_NEAR(out.grid.data()[i], expected, 1e-9);
  }
}

TEST(Normalize, EmptyValidSetIsAnError) {
  const AltitudeDifferenceMap adm{GridD::Zero(2, 2), GridB::Constant(2, 2, false)};
  EXPECT_EQ(code_of([&] { normalize_adm(adm, 2, 98); }), ErrorCode::EmptyValidSet);
}

TEST(AdaptLidar, ChannelsAreBoundedOnSyntheticFrames) {
  const FrameBundle f = synth_scene(6, SynthConfig{});
  const LidarChannels ch = adapt_lidar(f.cloud, f.calib, 96, 320, AdaptConfig{});
  for (const GridD* g : {&ch.adm_channel, &ch.range_channel, &ch.hit_channel}) {
    EXPECT_EQ(g->rows(), 96);
    EXPECT_EQ(g->cols(), 320);
    EXPECT_GE(g->minCoeff(), 0.0);
    EXPECT_LE(g->maxCoeff(), 1.0);
  }
  EXPECT_TRUE(((ch.hit_channel == 0.0) || (ch.hit_channel == 1.0)).all());
  EXPECT_GT(ch.projection.hit.count(), 1000);
  // Densification covers at least every hit pixel.
  EXPECT_GE(ch.adm.valid.count(), ch.projection.hit.count());
  const auto q = quantize_adm(ch.adm);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    EXPECT_EQ(q.data()[i], static_cast<std::uint16_t>(std::lround(ch.adm.grid.data()[i] * 65535.0)));
  }
}

TEST(AdaptLidar, EmptyCloudGivesZeroChannels) {
  const LidarChannels ch = adapt_lidar(PointCloud{}, synth_calibration(32, 40), 32, 40, AdaptConfig{});
  EXPECT_TRUE((ch.adm_channel == 0.0).all());
  EXPECT_TRUE((ch.range_channel == 0.0).all());
  EXPECT_TRUE((ch.hit_channel == 0.0).all());
}

}  // namespace
}  // namespace udeer

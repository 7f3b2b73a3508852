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

#include "udeer/kitti_io.hpp"

namespace udeer {

struct SynthConfig {
  int height = 96;
  int width = 320;
  int obstacle_count = 3;
  /// 0 = clean; 1 = heavy image noise and range jitter.
  double noise_level = 0.1;
};

/// Frame plus the renderer's per-pixel camera depth (meters, clamped to the
/// far limit), kept for geometric consistency checks.
struct SynthRender {
  FrameBundle frame;
  GridD depth_buffer;
};

inline constexpr double kSynthFarLimit = 80.0;

/// Calibration used by every synthetic frame of the given size.
CameraCalibration synth_calibration(int height, int width);

/// Deterministic in (seed, cfg): a ground plane with a curved road corridor
/// bounded by raised curbs, box obstacles, and sky. The RGB image, exact
/// ground truth and relative depth come from ray casting each pixel; the
/// point cloud comes from ray casting a 64-beam scan of the same geometry.
SynthRender synth_scene_render(std::uint64_t seed, const SynthConfig& cfg);
FrameBundle synth_scene(std::uint64_t seed, const SynthConfig& cfg);

}  // namespace udeer

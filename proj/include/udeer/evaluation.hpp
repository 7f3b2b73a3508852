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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "udeer/grid.hpp"
#include "udeer/kitti_io.hpp"

namespace udeer {

class ModelParams;
struct PreparedFrame;

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionCounts&) const = default;
};

inline constexpr int kThresholdLevels = 256;

/// Threshold k of the sweep: k / 255.
inline double sweep_threshold(int k) { return static_cast<double>(k) / 255.0; }

using SweepCounts = std::array<ConfusionCounts, kThresholdLevels>;

struct CurvePoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
};

struct EvalResult {
  double max_f = 0.0;  // percent
  double best_threshold = 0.0;
  double average_precision = 0.0;  // percent
  std::vector<CurvePoint> curve;   // thresholds strictly increasing
};

/// Positive iff prob >= threshold; Invalid pixels are skipped.
ConfusionCounts confusion_at(const GridD& prob, const GroundTruthMask& gt, double threshold);

/// Counts for all 256 thresholds in one pass.
SweepCounts sweep_counts(const GridD& prob, const GroundTruthMask& gt);

/// Precision (1 when nothing is predicted positive), recall, F1 (0 when
/// P + R = 0), MaxF with the smallest maximizing threshold, and AP by
/// trapezoidal integration over the recall-sorted curve anchored at
/// (recall 0, precision 1).
EvalResult result_from_counts(const SweepCounts& counts);

EvalResult max_f(const GridD& prob, const GroundTruthMask& gt);

/// Pools counts over frames before forming the curve.
EvalResult evaluate_predictions(std::span<const GridD> probs, std::span<const GroundTruthMask> gts);
EvalResult evaluate_set(const ModelParams& params, std::span<const PreparedFrame> frames);
EvalResult evaluate_set(const ModelParams& params, std::span<const FrameBundle> frames);

/// threshold,tp,fp,fn,tn,precision,recall,f1
std::string report_csv(const EvalResult& result);
/// "MaxF=<..> AP=<..> best_threshold=<..>"
std::string summary_line(const EvalResult& result);

/// Predicted road (prob >= threshold) tinted green over the frame; with
/// ground truth, false positives are tinted red and false negatives blue.
Image8 overlay(const Image8& rgb, const GridD& prob, const GroundTruthMask* gt, double threshold);

}  // namespace udeer

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

#include "udeer/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "udeer/error.hpp"
#include "udeer/format.hpp"
#include "udeer/model.hpp"
#include "udeer/parallel.hpp"

namespace udeer {
namespace {

void require_same_size(const GridD& prob, const GroundTruthMask& gt) {
  if (prob.rows() != gt.grid.rows() || prob.cols() != gt.grid.cols()) {
    throw Error(ErrorCode::ShapeMismatch, "probability map and ground truth differ in size");
  }
}

// Largest k with k/255 <= p, or -1.
int highest_passed_level(double p) {
  if (!(p >= 0.0)) return -1;
  int k = static_cast<int>(std::min(std::floor(p * 255.0), 255.0));
  while (k < kThresholdLevels - 1 && sweep_threshold(k + 1) <= p) ++k;
  while (k >= 0 && sweep_threshold(k) > p) --k;
  return k;
}

}  // namespace

ConfusionCounts confusion_at(const GridD& prob, const GroundTruthMask& gt, double threshold) {
  require_same_size(prob, gt);
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const auto l = gt.grid.data()[i];
    if (l == label::kInvalid) continue;
    const bool positive = prob.data()[i] >= threshold;
    const bool road = l == label::kRoad;
    if (positive) {
      ++(road ? c.tp : c.fp);
    } else {
      ++(road ? c.fn : c.tn);
    }
  }
  return c;
}

SweepCounts sweep_counts(const GridD& prob, const GroundTruthMask& gt) {
  require_same_size(prob, gt);
  // Histograms indexed by highest passed level + 1.
  std::array<std::uint64_t, kThresholdLevels + 1> road{}, other{};
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const auto l = gt.grid.data()[i];
    if (l == label::kInvalid) continue;
    const int level = highest_passed_level(prob.data()[i]) + 1;
    ++(l == label::kRoad ? road : other)[level];
  }
  const std::uint64_t road_total = std::accumulate(road.begin(), road.end(), std::uint64_t{0});
  const std::uint64_t other_total = std::accumulate(other.begin(), other.end(), std::uint64_t{0});
  SweepCounts out;
  std::uint64_t tp = 0, fp = 0;
  for (int k = kThresholdLevels - 1; k >= 0; --k) {
    tp += road[k + 1];
    fp += other[k + 1];
    out[k] = {tp, fp, road_total - tp, other_total - fp};
  }
  return out;
}

EvalResult result_from_counts(const SweepCounts& counts) {
  if (counts[0].total() == 0) throw Error(ErrorCode::NoValidPixels, "nothing to evaluate");
  EvalResult r;
  r.curve.reserve(kThresholdLevels);
  double best = -1.0;
  for (int k = 0; k < kThresholdLevels; ++k) {
    const ConfusionCounts& c = counts[k];
    CurvePoint pt;
    pt.threshold = sweep_threshold(k);
    pt.counts = c;
    pt.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 1.0;
    pt.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    const double denom = pt.precision + pt.recall;
    pt.f1 = denom > 0.0 ? 2.0 * pt.precision * pt.recall / denom : 0.0;
    if (pt.f1 > best) {
      best = pt.f1;
      r.best_threshold = pt.threshold;
    }
    r.curve.push_back(pt);
  }
  r.max_f = 100.0 * best;

  std::vector<int> order(kThresholdLevels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (r.curve[a].recall != r.curve[b].recall) return r.curve[a].recall < r.curve[b].recall;
    return a > b;
  });
  // The curve starts at (recall 0, precision 1), the limit of a threshold
  // above every score.
  double area = 0.0;
  double prev_recall = 0.0, prev_precision = 1.0;
  for (int k : order) {
    const CurvePoint& p = r.curve[k];
    area += (p.recall - prev_recall) * 0.5 * (prev_precision + p.precision);
    prev_recall = p.recall;
    prev_precision = p.precision;
  }
  r.average_precision = 100.0 * area;
  return r;
}

EvalResult max_f(const GridD& prob, const GroundTruthMask& gt) {
  return result_from_counts(sweep_counts(prob, gt));
}

EvalResult evaluate_predictions(std::span<const GridD> probs, std::span<const GroundTruthMask> gts) {
  if (probs.empty()) throw Error(ErrorCode::EmptyDataset, "no frames to evaluate");
  if (probs.size() != gts.size()) throw Error(ErrorCode::ShapeMismatch, "prediction/label count");
  SweepCounts pooled{};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const SweepCounts c = sweep_counts(probs[i], gts[i]);
    for (int k = 0; k < kThresholdLevels; ++k) pooled[k] += c[k];
  }
  return result_from_counts(pooled);
}

EvalResult evaluate_set(const ModelParams& params, std::span<const PreparedFrame> frames) {
  if (frames.empty()) throw Error(ErrorCode::EmptyDataset, "no frames to evaluate");
  const ModelParams frozen = params.frozen();
  std::vector<GridD> probs(frames.size());
  std::vector<GroundTruthMask> gts(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    const PreparedFrame& f = frames[i];
    if (!f.gt) throw Error(ErrorCode::InvalidArgument, f.frame_id + " has no ground truth");
    const ModelOutputs out = forward(frozen, f.inputs);
    probs[i] = to_grid(out.fine, out.height, out.width);
    gts[i] = *f.gt;
  });
  return evaluate_predictions(probs, gts);
}

EvalResult evaluate_set(const ModelParams& params, std::span<const FrameBundle> frames) {
  if (frames.empty()) throw Error(ErrorCode::EmptyDataset, "no frames to evaluate");
  const auto prepared = prepare_frames(frames, AdaptConfig{});
  return evaluate_set(params, std::span<const PreparedFrame>(prepared));
}

std::string report_csv(const EvalResult& result) {
  std::string out = "threshold,tp,fp,fn,tn,precision,recall,f1\n";
  for (const auto& p : result.curve) {
    out += format_number(p.threshold) + ',' + std::to_string(p.counts.tp) + ',' +
           std::to_string(p.counts.fp) + ',' + std::to_string(p.counts.fn) + ',' +
           std::to_string(p.counts.tn) + ',' + format_number(p.precision) + ',' +
           format_number(p.recall) + ',' + format_number(p.f1) + '\n';
  }
  return out;
}

std::string summary_line(const EvalResult& result) {
  return "MaxF=" + format_number(result.max_f) + " AP=" + format_number(result.average_precision) +
         " best_threshold=" + format_number(result.best_threshold);
}

Image8 overlay(const Image8& rgb, const GridD& prob, const GroundTruthMask* gt, double threshold) {
  if (rgb.channels != 3 || prob.rows() != rgb.height || prob.cols() != rgb.width) {
    throw Error(ErrorCode::ShapeMismatch, "overlay inputs differ in size");
  }
  if (gt != nullptr) require_same_size(prob, *gt);
  Image8 out = rgb;
  const auto tint = [&](int r, int c, int red, int green, int blue) {
    const int target[3] = {red, green, blue};
    for (int k = 0; k < 3; ++k) {
      out.at(r, c, k) = static_cast<std::uint8_t>((rgb.at(r, c, k) + target[k]) / 2);
    }
  };
  for (int r = 0; r < rgb.height; ++r) {
    for (int c = 0; c < rgb.width; ++c) {
      const bool predicted = prob(r, c) >= threshold;
      const auto l = gt != nullptr ? gt->grid(r, c) : label::kInvalid;
      if (l != label::kInvalid && predicted && l == label::kNonRoad) {
        tint(r, c, 255, 0, 0);
      } else if (l != label::kInvalid && !predicted && l == label::kRoad) {
        tint(r, c, 0, 0, 255);
      } else if (predicted) {
        tint(r, c, 0, 255, 0);
      }
    }
  }
  return out;
}

}  // namespace udeer

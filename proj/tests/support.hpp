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

// Independent reference implementations used by the unit tests and the
// acceptance runner. They favour plain loops over speed and share no code
// with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "udeer/diff_engine.hpp"
#include "udeer/grid.hpp"
#include "udeer/kitti_io.hpp"
#include "udeer/lidar_adaptation.hpp"
#include "udeer/model.hpp"
#include "udeer/rng.hpp"

namespace udeer::testing {

inline GridD random_grid(CounterRng& rng, int rows, int cols, double lo = 0.0, double hi = 1.0) {
  GridD g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(lo, hi);
  return g;
}

inline DiffTensor random_tensor(CounterRng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
  Eigen::VectorXd v(numel(shape));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return DiffTensor(std::move(shape), std::move(v), requires_grad);
}

// ---------------------------------------------------------------------------
// Finite differences.

struct GradCheck {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  Eigen::Index checked = 0;
};

/// Central differences of a scalar-valued function of `inputs` against the
/// gradients from backward(). `entries` limits the perturbed elements per
/// input (0 = all), picked by `rng`.
inline GradCheck finite_difference_check(
    const std::function<DiffTensor(const std::vector<DiffTensor>&)>& fn,
    std::vector<DiffTensor> inputs, double h = 1e-5, Eigen::Index entries = 0,
    CounterRng* rng = nullptr) {
  for (auto& x : inputs) x.clear_grad();
  const DiffTensor out = fn(inputs);
  backward(out);
  std::vector<Eigen::VectorXd> analytic;
  for (const auto& x : inputs) {
    analytic.push_back(x.has_grad() ? x.grad() : Eigen::VectorXd::Zero(x.size()));
  }
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheck result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<Eigen::Index> idx;
    if (entries == 0 || entries >= inputs[t].size()) {
      for (Eigen::Index i = 0; i < inputs[t].size(); ++i) idx.push_back(i);
    } else {
      for (Eigen::Index k = 0; k < entries; ++k) {
        idx.push_back(static_cast<Eigen::Index>(rng->below(inputs[t].size())));
      }
    }
    for (Eigen::Index i : idx) {
      double& v = inputs[t].mutable_data()[i];
      const double saved = v;
      v = saved + h;
      const double up = fn(inputs).item();
      v = saved - h;
      const double down = fn(inputs).item();
      v = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++result.checked;
    }
  }
  const double scale = std::sqrt(std::max(a2, n2));
  result.rel_error = scale > 0.0 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
  return result;
}

/// Reduces a tensor to a scalar with fixed random weights so that every
/// output element contributes a distinct coefficient.
inline DiffTensor weighted_sum(const DiffTensor& y, std::uint64_t seed) {
  CounterRng rng(seed);
  Eigen::VectorXd w(y.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-1.0, 1.0);
  return sum(mul(y, DiffTensor(y.shape(), std::move(w))));
}

// ---------------------------------------------------------------------------
// diff_engine oracles.

/// Six nested loops over [N,C,H,W] (*) [F,C,k,k].
inline Eigen::VectorXd conv2d_oracle(const DiffTensor& x, const DiffTensor& k,
                                     const DiffTensor& b, int stride, int pad) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto F = k.dim(0), K = k.dim(2);
  const auto Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  Eigen::VectorXd out(N * F * Ho * Wo);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index f = 0; f < F; ++f)
      for (Eigen::Index oy = 0; oy < Ho; ++oy)
        for (Eigen::Index ox = 0; ox < Wo; ++ox) {
          double acc = b.data()[f];
          for (Eigen::Index c = 0; c < C; ++c)
            for (Eigen::Index ky = 0; ky < K; ++ky)
              for (Eigen::Index kx = 0; kx < K; ++kx) {
                const Eigen::Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x.data()[((n * C + c) * H + iy) * W + ix] *
                       k.data()[((f * C + c) * K + ky) * K + kx];
              }
          out[((n * F + f) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

/// Half-pixel-centre bilinear sampling of one output pixel at a time.
inline Eigen::VectorXd bilinear_oracle(const DiffTensor& x, int factor) {
  const auto N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto Ho = H * factor, Wo = W * factor;
  Eigen::VectorXd out(N * C * Ho * Wo);
  auto sample = [&](Eigen::Index plane, Eigen::Index r, Eigen::Index c) {
    r = std::clamp<Eigen::Index>(r, 0, H - 1);
    c = std::clamp<Eigen::Index>(c, 0, W - 1);
    return x.data()[plane * H * W + r * W + c];
  };
  for (Eigen::Index p = 0; p < N * C; ++p)
    for (Eigen::Index oy = 0; oy < Ho; ++oy)
      for (Eigen::Index ox = 0; ox < Wo; ++ox) {
        const double sy = std::max(0.0, (oy + 0.5) / factor - 0.5);
        const double sx = std::max(0.0, (ox + 0.5) / factor - 0.5);
        const auto y0 = static_cast<Eigen::Index>(std::floor(sy));
        const auto x0 = static_cast<Eigen::Index>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        out[p * Ho * Wo + oy * Wo + ox] =
            (1 - fy) * ((1 - fx) * sample(p, y0, x0) + fx * sample(p, y0, x0 + 1)) +
            fy * ((1 - fx) * sample(p, y0 + 1, x0) + fx * sample(p, y0 + 1, x0 + 1));
      }
  return out;
}

/// Weighted mean binary cross-entropy, one pixel at a time.
inline double bce_oracle(const Eigen::VectorXd& prob, const Eigen::ArrayXd& target,
                         const Eigen::ArrayXd& weight) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    den += weight[i];
    if (weight[i] == 0.0) continue;
    const double p = std::min(std::max(prob[i], kBceEpsilon), 1.0 - kBceEpsilon);
    num += weight[i] * -(target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p));
  }
  return num / std::max(den, 1.0);
}

// ---------------------------------------------------------------------------
// lidar_adaptation oracles.

struct OracleHit {
  bool hit = false;
  double depth = 0.0;
  double altitude = 0.0;
  std::size_t index = 0;
};

/// Per-point matrix products with explicit loops; a pixel keeps the
/// strictly nearest point, the first one on ties.
inline std::vector<OracleHit> projection_oracle(const PointCloud& cloud, const CameraCalibration& c,
                                                int height, int width) {
  std::vector<OracleHit> img(static_cast<std::size_t>(height) * width);
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const double xv[4] = {cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2), 1.0};
    double velo_cam[4], rect[4], pix[3];
    for (int r = 0; r < 4; ++r) {
      velo_cam[r] = 0.0;
      for (int k = 0; k < 4; ++k) velo_cam[r] += c.T_velo_to_cam(r, k) * xv[k];
    }
    for (int r = 0; r < 4; ++r) {
      rect[r] = 0.0;
      for (int k = 0; k < 4; ++k) rect[r] += c.R_rect(r, k) * velo_cam[k];
    }
    for (int r = 0; r < 3; ++r) {
      pix[r] = 0.0;
      for (int k = 0; k < 4; ++k) pix[r] += c.P(r, k) * rect[k];
    }
    if (!(rect[2] > kMinCameraDepth) || !(pix[2] > 0.0)) continue;
    const double u = std::floor(pix[0] / pix[2]), v = std::floor(pix[1] / pix[2]);
    if (u < 0 || v < 0 || u >= width || v >= height) continue;
    OracleHit& cell = img[static_cast<std::size_t>(v) * width + static_cast<std::size_t>(u)];
    if (!cell.hit || rect[2] < cell.depth) {
      cell = {true, rect[2], xv[2], static_cast<std::size_t>(i)};
    }
  }
  return img;
}

/// Mean |dZ| / distance over hit neighbours in a Chebyshev window.
inline GridD adm_oracle(const GridD& altitude, const GridB& hit, int radius) {
  GridD out = GridD::Zero(altitude.rows(), altitude.cols());
  for (Eigen::Index r = 0; r < altitude.rows(); ++r)
    for (Eigen::Index c = 0; c < altitude.cols(); ++c) {
      if (!hit(r, c)) continue;
      double total = 0.0;
      int n = 0;
      for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) {
          const Eigen::Index rr = r + dr, cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= altitude.rows() ||
              cc >= altitude.cols() || !hit(rr, cc)) {
            continue;
          }
          total += std::abs(altitude(r, c) - altitude(rr, cc)) / std::hypot(dr, dc);
          ++n;
        }
      out(r, c) = n > 0 ? total / n : 0.0;
    }
  return out;
}

/// Sort, then interpolate between neighbouring order statistics.
inline double percentile_oracle(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Multi-source breadth-first search over 8-neighbours; returns the
/// Chebyshev distance to the nearest valid pixel (-1 when unreachable).
inline Grid<int> bfs_distance(const GridB& valid) {
  Grid<int> dist = Grid<int>::Constant(valid.rows(), valid.cols(), -1);
  std::deque<std::pair<Eigen::Index, Eigen::Index>> queue;
  for (Eigen::Index r = 0; r < valid.rows(); ++r)
    for (Eigen::Index c = 0; c < valid.cols(); ++c)
      if (valid(r, c)) {
        dist(r, c) = 0;
        queue.emplace_back(r, c);
      }
  while (!queue.empty()) {
    const auto [r, c] = queue.front();
    queue.pop_front();
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        const Eigen::Index rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= valid.rows() || cc >= valid.cols() || dist(rr, cc) >= 0) continue;
        dist(rr, cc) = dist(r, c) + 1;
        queue.emplace_back(rr, cc);
      }
  }
  return dist;
}

// ---------------------------------------------------------------------------
// evaluation oracle.

struct BruteForceF {
  double max_f = 0.0;  // percent
  double best_threshold = 0.0;
  double average_precision = 0.0;  // percent, trapezoids from (0, 1)
};

/// Tries each of the 256 thresholds k/255 with a fresh per-pixel count.
inline BruteForceF brute_force_max_f(const std::vector<const GridD*>& probs,
                                     const std::vector<const GroundTruthMask*>& gts) {
  BruteForceF best;
  double best_f1 = -1.0;
  std::vector<std::pair<double, double>> pr;  // (recall, precision), highest threshold first
  for (int k = 255; k >= 0; --k) {
    const double t = static_cast<double>(k) / 255.0;
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t f = 0; f < probs.size(); ++f) {
      for (Eigen::Index i = 0; i < probs[f]->size(); ++i) {
        const std::uint8_t g = gts[f]->grid.data()[i];
        if (g == label::kInvalid) continue;
        const bool pos = probs[f]->data()[i] >= t;
        if (pos && g == label::kRoad) ++tp;
        if (pos && g == label::kNonRoad) ++fp;
        if (!pos && g == label::kRoad) ++fn;
      }
    }
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    if (f1 >= best_f1) {
      best_f1 = f1;
      best.best_threshold = t;
    }
    pr.emplace_back(recall, precision);
  }
  best.max_f = 100.0 * best_f1;
  std::stable_sort(pr.begin(), pr.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double r0 = 0.0, p0 = 1.0;
  for (const auto& [r, p] : pr) {
    best.average_precision += 100.0 * (r - r0) * 0.5 * (p0 + p);
    r0 = r;
    p0 = p;
  }
  return best;
}

inline GroundTruthMask mask_from(const Grid<std::uint8_t>& grid) { return GroundTruthMask{grid}; }

// ---------------------------------------------------------------------------
// Per-op gradient cases: a scalar function of freshly drawn inputs.

struct OpCase {
  std::string name;
  std::function<DiffTensor(const std::vector<DiffTensor>&)> fn;
  std::vector<DiffTensor> inputs;
};

inline std::vector<OpCase> op_gradient_cases(std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<OpCase> cases;
  auto reduce = [seed](const DiffTensor& y) { return weighted_sum(y, hash_combine(seed, 99)); };
  cases.push_back({"conv2d 3x3 stride 1 pad 1",
                   [=](const auto& in) { return reduce(conv2d(in[0], in[1], in[2], 1, 1)); },
                   {random_tensor(rng, {1, 2, 5, 5}), random_tensor(rng, {3, 2, 3, 3}),
                    random_tensor(rng, {3})}});
  cases.push_back({"conv2d 3x3 stride 2 pad 1",
                   [=](const auto& in) { return reduce(conv2d(in[0], in[1], in[2], 2, 1)); },
                   {random_tensor(rng, {1, 3, 6, 8}), random_tensor(rng, {2, 3, 3, 3}),
                    random_tensor(rng, {2})}});
  cases.push_back({"conv2d 1x1",
                   [=](const auto& in) { return reduce(conv2d(in[0], in[1], in[2], 1, 0)); },
                   {random_tensor(rng, {1, 4, 3, 5}), random_tensor(rng, {2, 4, 1, 1}),
                    random_tensor(rng, {2})}});
  cases.push_back({"relu", [=](const auto& in) { return reduce(relu(in[0])); },
                   {random_tensor(rng, {1, 2, 4, 4})}});
  cases.push_back({"sigmoid", [=](const auto& in) { return reduce(sigmoid(in[0])); },
                   {random_tensor(rng, {1, 2, 4, 4})}});
  cases.push_back({"bilinear_upsample x2",
                   [=](const auto& in) { return reduce(bilinear_upsample(in[0], 2)); },
                   {random_tensor(rng, {1, 2, 3, 4})}});
  cases.push_back({"bilinear_upsample x8",
                   [=](const auto& in) { return reduce(bilinear_upsample(in[0], 8)); },
                   {random_tensor(rng, {1, 1, 2, 3})}});
  cases.push_back({"concat_channels",
                   [=](const auto& in) { return reduce(concat_channels({in[0], in[1], in[2]})); },
                   {random_tensor(rng, {1, 1, 3, 3}), random_tensor(rng, {1, 2, 3, 3}),
                    random_tensor(rng, {1, 3, 3, 3})}});
  cases.push_back({"add", [=](const auto& in) { return reduce(add(in[0], in[1])); },
                   {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 2, 3, 3})}});
  cases.push_back({"mul", [=](const auto& in) { return reduce(mul(in[0], in[1])); },
                   {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 2, 3, 3})}});
  cases.push_back({"scale", [=](const auto& in) { return reduce(scale(in[0], -1.7)); },
                   {random_tensor(rng, {1, 2, 3, 3})}});
  cases.push_back({"sum", [](const auto& in) { return sum(in[0]); },
                   {random_tensor(rng, {1, 2, 3, 3})}});
  Eigen::ArrayXd target(16), weight(16);
  for (Eigen::Index i = 0; i < 16; ++i) {
    target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    weight[i] = rng.uniform() < 0.25 ? 0.0 : rng.uniform(0.1, 2.0);
  }
  cases.push_back({"bce_masked",
                   [=](const auto& in) { return bce_masked(in[0], target, weight); },
                   {random_tensor(rng, {1, 1, 4, 4}, 0.05, 0.95)}});
  cases.push_back({"composite chain",
                   [=](const auto& in) {
                     const DiffTensor h = relu(conv2d(in[0], in[1], in[2], 2, 1));
                     const DiffTensor u = bilinear_upsample(h, 2);
                     const DiffTensor p = sigmoid(conv2d(concat_channels({u, in[0]}), in[3], in[4], 1, 0));
                     return add(bce_masked(p, target, weight), scale(sum(mul(p, p)), 0.1));
                   },
                   {random_tensor(rng, {1, 2, 4, 4}), random_tensor(rng, {3, 2, 3, 3}),
                    random_tensor(rng, {3}), random_tensor(rng, {1, 5, 1, 1}),
                    random_tensor(rng, {1})}});
  return cases;
}

// ---------------------------------------------------------------------------
// Model helpers.

inline ModelInputs random_inputs(CounterRng& rng, int height, int width) {
  ModelInputs in;
  in.height = height;
  in.width = width;
  in.image = random_tensor(rng, {1, 3, height, width}, 0.0, 1.0, false);
  in.lidar = random_tensor(rng, {1, 3, height, width}, 0.0, 1.0, false);
  in.depth = random_tensor(rng, {1, 1, height, width}, 0.0, 1.0, false);
  return in;
}

inline GroundTruthMask random_mask(CounterRng& rng, int height, int width, double invalid_fraction) {
  GroundTruthMask gt{GridU8(height, width)};
  for (Eigen::Index i = 0; i < gt.grid.size(); ++i) {
    gt.grid.data()[i] = rng.uniform() < invalid_fraction ? label::kInvalid
                        : rng.uniform() < 0.5            ? label::kRoad
                                                         : label::kNonRoad;
  }
  return gt;
}

/// Finite-difference check of d(total_loss)/d(parameters) for the full
/// network on a 16 x 16 frame, sampling `entries` elements per tensor.
inline GradCheck model_gradient_check(std::uint64_t seed, Eigen::Index entries) {
  CounterRng rng(seed);
  ModelParams params = ModelParams::initialize(ModelConfig{}, seed);
  // Non-zero biases so every bias path carries signal.
  for (auto& p : params.parameters()) {
    if (p.value.dim(0) == p.value.size()) {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.mutable_data()[i] = rng.uniform(-0.1, 0.1);
    }
  }
  const ModelInputs in = random_inputs(rng, 16, 16);
  const GroundTruthMask gt = random_mask(rng, 16, 16, 0.2);
  std::vector<DiffTensor> handles;
  for (auto& p : params.parameters()) handles.push_back(p.value);
  const LossWeights w;
  auto fn = [&](const std::vector<DiffTensor>&) { return total_loss(forward(params, in), gt, w); };
  return finite_difference_check(fn, handles, 1e-5, entries, &rng);
}

}  // namespace udeer::testing

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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udeer/diff_engine.hpp"
#include "udeer/kitti_io.hpp"
#include "udeer/lidar_adaptation.hpp"

namespace udeer {

/// Weights of the auxiliary per-modality terms in
/// loss = fine + alpha * image + beta * lidar + gamma * depth.
struct LossWeights {
  double alpha = 0.4;
  double beta = 0.4;
  double gamma = 0.4;

  void validate() const;
};

struct ModelConfig {
  /// When false, LiDAR/depth features join only the deepest decoder stage.
  bool fuse_all_levels = true;
  /// Multiplier on the uniform init bound 1/sqrt(fan_in). The default sqrt(6)
  /// is He-uniform; 0 gives an all-zero network.
  double init_scale = kHeUniformScale;

  static constexpr double kHeUniformScale = 2.449489742783178;
};

/// Convolution layers in checkpoint order. Each has a weight and a bias.
enum class Layer : int {
  ImageEnc1, ImageEnc2, ImageEnc3,
  LidarEnc1, LidarEnc2, LidarEnc3,
  DepthEnc1, DepthEnc2, DepthEnc3,
  Fuse1, Fuse2, Fuse3,
  HeadFine, HeadImage, HeadLidar, HeadDepth,
  Count,
};

struct LayerSpec {
  const char* name;
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
};

/// Channel widths and kernel sizes of every layer for a given configuration.
LayerSpec layer_spec(Layer layer, const ModelConfig& cfg);

/// All trainable tensors of the three-stream encoder-decoder. Copies are deep.
class ModelParams {
 public:
  /// Weights uniform in +-init_scale/sqrt(fan_in) from a counter-based
  /// stream keyed by (seed, tensor, element); biases zero.
  static ModelParams initialize(const ModelConfig& cfg, std::uint64_t seed);

  ModelParams(const ModelParams& other);
  ModelParams& operator=(const ModelParams& other);
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;

  const ModelConfig& config() const { return cfg_; }
  const DiffTensor& weight(Layer l) const { return params_[2 * static_cast<int>(l)].value; }
  const DiffTensor& bias(Layer l) const { return params_[2 * static_cast<int>(l) + 1].value; }

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }

  /// Hash of the configuration plus every parameter name and shape.
  std::uint64_t architecture_hash() const;

  /// Copy with gradients disabled, for concurrent read-only inference.
  ModelParams frozen() const;

  bool bitwise_equal(const ModelParams& other) const;

  std::vector<std::uint8_t> save() const;
  static ModelParams load(std::span<const std::uint8_t> bytes, const ModelConfig& cfg);
  void save(const std::filesystem::path& path) const;
  static ModelParams load(const std::filesystem::path& path, const ModelConfig& cfg);

 private:
  ModelParams() = default;
  ModelConfig cfg_;
  std::vector<Parameter> params_;
};

/// Network inputs, each [1, C, H, W] with values in [0, 1].
struct ModelInputs {
  DiffTensor image;  // C = 3
  DiffTensor lidar;  // C = 3 (ADM, range, hit)
  DiffTensor depth;  // C = 1
  int height = 0;
  int width = 0;
};

ModelInputs make_inputs(const Image8& rgb, const LidarChannels& lidar, const RelativeDepthMap& depth);

/// Each map is [1, 1, H, W] sigmoid probabilities.
struct ModelOutputs {
  DiffTensor fine;
  DiffTensor image_aux;
  DiffTensor lidar_aux;
  DiffTensor depth_aux;
  DiffTensor fine_logit;
  int height = 0;
  int width = 0;
};

ModelOutputs forward(const ModelParams& params, const ModelInputs& inputs);

GridD to_grid(const DiffTensor& map, int height, int width);

struct LossTerms {
  DiffTensor total;
  double fine = 0.0;
  double image = 0.0;
  double lidar = 0.0;
  double depth = 0.0;
};

/// Weighted sum of four masked BCE terms against a shared target and
/// per-pixel weight (flat, row-major, H*W entries).
LossTerms weighted_loss(const ModelOutputs& out, const Eigen::Ref<const Eigen::ArrayXd>& target,
                        const Eigen::Ref<const Eigen::ArrayXd>& weight, const LossWeights& w);

/// Supervised loss; Invalid ground-truth pixels carry zero weight.
LossTerms total_loss_terms(const ModelOutputs& out, const GroundTruthMask& gt, const LossWeights& w);
DiffTensor total_loss(const ModelOutputs& out, const GroundTruthMask& gt, const LossWeights& w);

/// A frame converted to network inputs once, reused across steps.
struct PreparedFrame {
  std::string frame_id;
  ModelInputs inputs;
  std::optional<GroundTruthMask> gt;
};

PreparedFrame prepare_frame(const FrameBundle& frame, const AdaptConfig& adapt);
std::vector<PreparedFrame> prepare_frames(std::span<const FrameBundle> frames,
                                          const AdaptConfig& adapt);

/// Horizontally mirrored copy (inputs and ground truth).
PreparedFrame hflip(const PreparedFrame& frame);

struct TrainConfig {
  int steps = 200;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  LossWeights loss_weights;
  ModelConfig model;
  AdaptConfig adapt;
  bool hflip = true;
};

struct StepLog {
  int step = 0;
  double loss_fine = 0.0;
  double loss_image = 0.0;
  double loss_lidar = 0.0;
  double loss_depth = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> log;
};

/// Frame order is an epoch-wise shuffle drawn from a stream keyed by the seed.
TrainResult train_supervised(std::span<const PreparedFrame> train_set, const TrainConfig& cfg);
TrainResult train_supervised(std::span<const FrameBundle> train_set, const TrainConfig& cfg);

/// One forward/backward/update on a labeled frame.
StepLog supervised_step(ModelParams& params, const PreparedFrame& frame, const TrainConfig& cfg,
                        int step);

/// CSV with header step,loss_fine,loss_image,loss_lidar,loss_depth,total.
std::string loss_log_csv(std::span<const StepLog> log);

}  // namespace udeer

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

#include "udeer/model.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include "udeer/checkpoint.hpp"
#include "udeer/error.hpp"
#include "udeer/format.hpp"
#include "udeer/parallel.hpp"
#include "udeer/rng.hpp"

namespace udeer {
namespace {

constexpr int kLayerCount = static_cast<int>(Layer::Count);

DiffTensor conv(const ModelParams& p, Layer l, const DiffTensor& x, int stride, int pad) {
  return conv2d(x, p.weight(l), p.bias(l), stride, pad);
}

DiffTensor encoder_stage(const ModelParams& p, Layer l, const DiffTensor& x) {
  return relu(conv(p, l, x, 2, 1));
}

DiffTensor head(const ModelParams& p, Layer l, const DiffTensor& x) {
  return conv(p, l, x, 1, 0);
}

DiffTensor planes_from_grids(std::initializer_list<const GridD*> grids) {
  const auto* first = *grids.begin();
  const Eigen::Index h = first->rows(), w = first->cols(), plane = h * w;
  Eigen::VectorXd data(static_cast<Eigen::Index>(grids.size()) * plane);
  Eigen::Index offset = 0;
  for (const GridD* g : grids) {
    if (g->rows() != h || g->cols() != w) {
      throw Error(ErrorCode::ShapeMismatch, "input planes differ in size");
    }
    data.segment(offset, plane) = flat(*g).matrix();
    offset += plane;
  }
  return DiffTensor({1, static_cast<Eigen::Index>(grids.size()), h, w}, std::move(data));
}

DiffTensor flip_planes(const DiffTensor& x) {
  const Eigen::Index planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index p = 0; p < planes; ++p) {
    for (Eigen::Index r = 0; r < h; ++r) {
      out.segment((p * h + r) * w, w) = x.data().segment((p * h + r) * w, w).reverse();
    }
  }
  return DiffTensor(x.shape(), std::move(out));
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidArgument, "loss weights must be finite and non-negative");
    }
  }
}

LayerSpec layer_spec(Layer layer, const ModelConfig& cfg) {
  const bool all = cfg.fuse_all_levels;
  switch (layer) {
    case Layer::ImageEnc1: return {"image.enc1", 3, 16, 3, 2};
    case Layer::ImageEnc2: return {"image.enc2", 16, 32, 3, 2};
    case Layer::ImageEnc3: return {"image.enc3", 32, 64, 3, 2};
    case Layer::LidarEnc1: return {"lidar.enc1", 3, 8, 3, 2};
    case Layer::LidarEnc2: return {"lidar.enc2", 8, 16, 3, 2};
    case Layer::LidarEnc3: return {"lidar.enc3", 16, 32, 3, 2};
    case Layer::DepthEnc1: return {"depth.enc1", 1, 8, 3, 2};
    case Layer::DepthEnc2: return {"depth.enc2", 8, 16, 3, 2};
    case Layer::DepthEnc3: return {"depth.enc3", 16, 32, 3, 2};
    // Decoder stage inputs: upsampled decoder state + image skip
    // (+ upsampled LiDAR and depth features).
    case Layer::Fuse1: return {"decoder.fuse1", 64 + 32 + 32 + 32, 32, 1, 1};
    case Layer::Fuse2: return {"decoder.fuse2", 32 + 16 + (all ? 16 + 16 : 0), 16, 1, 1};
    case Layer::Fuse3: return {"decoder.fuse3", 16 + 3 + (all ? 8 + 8 : 0), 8, 1, 1};
    case Layer::HeadFine: return {"head.fine", 8, 1, 1, 1};
    case Layer::HeadImage: return {"head.image", 64, 1, 1, 1};
    case Layer::HeadLidar: return {"head.lidar", 32, 1, 1, 1};
    case Layer::HeadDepth: return {"head.depth", 32, 1, 1, 1};
    case Layer::Count: break;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown layer");
}

ModelParams ModelParams::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  if (!std::isfinite(cfg.init_scale) || cfg.init_scale < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "init_scale must be finite and >= 0");
  }
  ModelParams out;
  out.cfg_ = cfg;
  for (int i = 0; i < kLayerCount; ++i) {
    const LayerSpec s = layer_spec(static_cast<Layer>(i), cfg);
    const Eigen::Index fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    const double bound = cfg.init_scale / std::sqrt(static_cast<double>(fan_in));
    const std::uint64_t key = hash_combine(seed, static_cast<std::uint64_t>(2 * i));
    Eigen::VectorXd w(static_cast<Eigen::Index>(s.out_channels) * fan_in);
    for (Eigen::Index e = 0; e < w.size(); ++e) {
      w(e) = bound * (2.0 * to_unit(hash_combine(key, static_cast<std::uint64_t>(e))) - 1.0);
    }
    out.params_.push_back(make_parameter(
        std::string(s.name) + ".weight",
        DiffTensor({s.out_channels, s.in_channels, s.kernel, s.kernel}, std::move(w), true)));
    out.params_.push_back(
        make_parameter(std::string(s.name) + ".bias", DiffTensor::zeros({s.out_channels}, true)));
  }
  return out;
}

ModelParams::ModelParams(const ModelParams& other) : cfg_(other.cfg_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    params_.push_back({p.name, p.value.clone(p.value.requires_grad()), p.velocity});
  }
}

ModelParams& ModelParams::operator=(const ModelParams& other) {
  if (this != &other) *this = ModelParams(other);
  return *this;
}

std::uint64_t ModelParams::architecture_hash() const {
  std::string desc = cfg_.fuse_all_levels ? "fuse=all;" : "fuse=deepest;";
  for (const auto& p : params_) desc += p.name + shape_string(p.value.shape()) + ";";
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(desc.data()), desc.size()));
}

ModelParams ModelParams::frozen() const {
  ModelParams out;
  out.cfg_ = cfg_;
  for (const auto& p : params_) {
    out.params_.push_back({p.name, p.value.clone(false), Eigen::VectorXd()});
    out.params_.back().value.clear_grad();
  }
  return out;
}

bool ModelParams::bitwise_equal(const ModelParams& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i].value;
    const auto& b = other.params_[i].value;
    if (a.shape() != b.shape()) return false;
    if (std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.size()) != 0) return false;
  }
  return true;
}

std::vector<std::uint8_t> ModelParams::save() const {
  return encode_checkpoint(params_, architecture_hash());
}

ModelParams ModelParams::load(std::span<const std::uint8_t> bytes, const ModelConfig& cfg) {
  ModelParams out = initialize(cfg, 0);
  decode_checkpoint(bytes, out.params_, out.architecture_hash());
  return out;
}

void ModelParams::save(const std::filesystem::path& path) const { write_file(path, save()); }

ModelParams ModelParams::load(const std::filesystem::path& path, const ModelConfig& cfg) {
  return load(read_file(path), cfg);
}

ModelInputs make_inputs(const Image8& rgb, const LidarChannels& lidar, const RelativeDepthMap& depth) {
  if (rgb.channels != 3) throw Error(ErrorCode::ShapeMismatch, "image must be RGB");
  const int h = rgb.height, w = rgb.width;
  std::array<GridD, 3> colors;
  for (int ch = 0; ch < 3; ++ch) {
    colors[ch].resize(h, w);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) colors[ch](r, c) = rgb.at(r, c, ch) / 255.0;
    }
  }
  ModelInputs in;
  in.height = h;
  in.width = w;
  in.image = planes_from_grids({&colors[0], &colors[1], &colors[2]});
  in.lidar = planes_from_grids({&lidar.adm_channel, &lidar.range_channel, &lidar.hit_channel});
  in.depth = planes_from_grids({&depth.grid});
  if (in.lidar.dim(2) != h || in.lidar.dim(3) != w || in.depth.dim(2) != h || in.depth.dim(3) != w) {
    throw Error(ErrorCode::ShapeMismatch, "modalities differ in resolution");
  }
  return in;
}

ModelOutputs forward(const ModelParams& params, const ModelInputs& in) {
  const auto check = [&](const DiffTensor& t, Eigen::Index channels, const char* what) {
    if (t.shape() != Shape{1, channels, in.height, in.width}) {
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + " " + shape_string(t.shape()));
    }
  };
  check(in.image, 3, "image");
  check(in.lidar, 3, "lidar");
  check(in.depth, 1, "depth");
  if (in.height % 8 != 0 || in.width % 8 != 0) {
    throw Error(ErrorCode::NonDivisibleResolution,
                std::to_string(in.height) + "x" + std::to_string(in.width));
  }
  const bool all = params.config().fuse_all_levels;

  const DiffTensor img1 = encoder_stage(params, Layer::ImageEnc1, in.image);
  const DiffTensor img2 = encoder_stage(params, Layer::ImageEnc2, img1);
  const DiffTensor img3 = encoder_stage(params, Layer::ImageEnc3, img2);
  const DiffTensor lid1 = encoder_stage(params, Layer::LidarEnc1, in.lidar);
  const DiffTensor lid2 = encoder_stage(params, Layer::LidarEnc2, lid1);
  const DiffTensor lid3 = encoder_stage(params, Layer::LidarEnc3, lid2);
  const DiffTensor dep1 = encoder_stage(params, Layer::DepthEnc1, in.depth);
  const DiffTensor dep2 = encoder_stage(params, Layer::DepthEnc2, dep1);
  const DiffTensor dep3 = encoder_stage(params, Layer::DepthEnc3, dep2);

  std::vector<DiffTensor> parts{bilinear_upsample(img3, 2), img2, bilinear_upsample(lid3, 2),
                                bilinear_upsample(dep3, 2)};
  DiffTensor dec = relu(head(params, Layer::Fuse1, concat_channels(parts)));

  parts = {bilinear_upsample(dec, 2), img1};
  if (all) {
    parts.push_back(bilinear_upsample(lid2, 2));
    parts.push_back(bilinear_upsample(dep2, 2));
  }
  dec = relu(head(params, Layer::Fuse2, concat_channels(parts)));

  parts = {bilinear_upsample(dec, 2), in.image};
  if (all) {
    parts.push_back(bilinear_upsample(lid1, 2));
    parts.push_back(bilinear_upsample(dep1, 2));
  }
  dec = relu(head(params, Layer::Fuse3, concat_channels(parts)));

  ModelOutputs out;
  out.height = in.height;
  out.width = in.width;
  out.fine_logit = head(params, Layer::HeadFine, dec);
  out.fine = sigmoid(out.fine_logit);
  out.image_aux = sigmoid(bilinear_upsample(head(params, Layer::HeadImage, img3), 8));
  out.lidar_aux = sigmoid(bilinear_upsample(head(params, Layer::HeadLidar, lid3), 8));
  out.depth_aux = sigmoid(bilinear_upsample(head(params, Layer::HeadDepth, dep3), 8));
  return out;
}

GridD to_grid(const DiffTensor& map, int height, int width) {
  if (map.size() != static_cast<Eigen::Index>(height) * width) {
    throw Error(ErrorCode::ShapeMismatch, "map " + shape_string(map.shape()));
  }
  return Eigen::Map<const GridD>(map.data().data(), height, width);
}

LossTerms weighted_loss(const ModelOutputs& out, const Eigen::Ref<const Eigen::ArrayXd>& target,
                        const Eigen::Ref<const Eigen::ArrayXd>& weight, const LossWeights& w) {
  w.validate();
  const DiffTensor fine = bce_masked(out.fine, target, weight);
  const DiffTensor image = bce_masked(out.image_aux, target, weight);
  const DiffTensor lidar = bce_masked(out.lidar_aux, target, weight);
  const DiffTensor depth = bce_masked(out.depth_aux, target, weight);
  LossTerms terms;
  terms.total = add(add(add(fine, scale(image, w.alpha)), scale(lidar, w.beta)), scale(depth, w.gamma));
  terms.fine = fine.item();
  terms.image = image.item();
  terms.lidar = lidar.item();
  terms.depth = depth.item();
  return terms;
}

LossTerms total_loss_terms(const ModelOutputs& out, const GroundTruthMask& gt, const LossWeights& w) {
  if (gt.grid.rows() != out.height || gt.grid.cols() != out.width) {
    throw Error(ErrorCode::ShapeMismatch, "ground truth size differs from outputs");
  }
  const GridD target = gt.road();
  const GridD weight = gt.valid().cast<double>();
  return weighted_loss(out, flat(target), flat(weight), w);
}

DiffTensor total_loss(const ModelOutputs& out, const GroundTruthMask& gt, const LossWeights& w) {
  return total_loss_terms(out, gt, w).total;
}

PreparedFrame prepare_frame(const FrameBundle& frame, const AdaptConfig& adapt) {
  PreparedFrame out;
  out.frame_id = frame.frame_id;
  const LidarChannels lidar =
      adapt_lidar(frame.cloud, frame.calib, frame.image.height, frame.image.width, adapt);
  out.inputs = make_inputs(frame.image, lidar, frame.depth);
  out.gt = frame.gt;
  return out;
}

std::vector<PreparedFrame> prepare_frames(std::span<const FrameBundle> frames,
                                          const AdaptConfig& adapt) {
  std::vector<PreparedFrame> out(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) { out[i] = prepare_frame(frames[i], adapt); });
  return out;
}

PreparedFrame hflip(const PreparedFrame& frame) {
  PreparedFrame out;
  out.frame_id = frame.frame_id;
  out.inputs.height = frame.inputs.height;
  out.inputs.width = frame.inputs.width;
  out.inputs.image = flip_planes(frame.inputs.image);
  out.inputs.lidar = flip_planes(frame.inputs.lidar);
  out.inputs.depth = flip_planes(frame.inputs.depth);
  if (frame.gt) out.gt = GroundTruthMask{frame.gt->grid.rowwise().reverse()};
  return out;
}

StepLog supervised_step(ModelParams& params, const PreparedFrame& frame, const TrainConfig& cfg,
                        int step) {
  if (!frame.gt) throw Error(ErrorCode::InvalidArgument, frame.frame_id + " has no ground truth");
  const ModelOutputs out = forward(params, frame.inputs);
  const LossTerms terms = total_loss_terms(out, *frame.gt, cfg.loss_weights);
  backward(terms.total);
  sgd_step(params.parameters(), cfg.lr, cfg.momentum);
  return {step, terms.fine, terms.image, terms.lidar, terms.depth, terms.total.item()};
}

TrainResult train_supervised(std::span<const PreparedFrame> train_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "no training frames");
  if (cfg.steps < 0) throw Error(ErrorCode::InvalidArgument, "steps must be >= 0");
  for (const auto& f : train_set) {
    if (!f.gt || f.gt->road_count() == 0) {
      throw Error(ErrorCode::InvalidArgument, f.frame_id + " lacks a usable ground-truth mask");
    }
  }
  TrainResult result{ModelParams::initialize(cfg.model, cfg.seed), {}};
  std::vector<PreparedFrame> flipped;
  if (cfg.hflip) {
    for (const auto& f : train_set) flipped.push_back(hflip(f));
  }
  CounterRng rng(hash_combine(cfg.seed, 0x5348554646ULL));
  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    const std::size_t idx = order[cursor++];
    const bool flip = cfg.hflip && (rng.next_u64() & 1U);
    const PreparedFrame& frame = flip ? flipped[idx] : train_set[idx];
    result.log.push_back(supervised_step(result.params, frame, cfg, step));
  }
  return result;
}

TrainResult train_supervised(std::span<const FrameBundle> train_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw Error(ErrorCode::EmptyDataset, "no training frames");
  const auto prepared = prepare_frames(train_set, cfg.adapt);
  return train_supervised(std::span<const PreparedFrame>(prepared), cfg);
}

std::string loss_log_csv(std::span<const StepLog> log) {
  std::string out = "step,loss_fine,loss_image,loss_lidar,loss_depth,total\n";
  for (const auto& s : log) {
    out += std::to_string(s.step) + ',' + format_number(s.loss_fine) + ',' +
           format_number(s.loss_image) + ',' + format_number(s.loss_lidar) + ',' +
           format_number(s.loss_depth) + ',' + format_number(s.total) + '\n';
  }
  return out;
}

}  // namespace udeer

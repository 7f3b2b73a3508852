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

#include "udeer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "udeer/checkpoint.hpp"
#include "udeer/config.hpp"
#include "udeer/error.hpp"
#include "udeer/evaluation.hpp"
#include "udeer/kitti_io.hpp"
#include "udeer/lidar_adaptation.hpp"
#include "udeer/model.hpp"
#include "udeer/parallel.hpp"
#include "udeer/png_io.hpp"
#include "udeer/rng.hpp"
#include "udeer/semi_supervised.hpp"
#include "udeer/synth.hpp"

namespace udeer::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Failure {
  int code;
  std::string message;
};

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a over every file (relative path + bytes) in sorted order.
std::string digest(const fs::path& path) {
  std::error_code ec;
  if (fs::is_regular_file(path, ec)) return hex64(fnv1a(read_file(path)));
  std::vector<fs::path> files;
  if (fs::is_directory(path, ec)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a({});
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, path).generic_string();
    h = fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(rel.data()), rel.size()), h);
    h = fnv1a(read_file(f), h);
  }
  return hex64(h);
}

class Run {
 public:
  Run(std::string command, Config cfg, fs::path config_path, fs::path out_dir, std::uint64_t seed)
      : command_(std::move(command)),
        cfg_(std::move(cfg)),
        out_dir_(std::move(out_dir)),
        seed_(seed),
        started_(utc_timestamp()) {
    add_input(config_path);
  }

  const Config& cfg() const { return cfg_; }
  const fs::path& out() const { return out_dir_; }
  std::uint64_t seed() const { return seed_; }

  void add_input(const fs::path& p) { inputs_.push_back({{"path", p.string()}, {"fnv1a64", digest(p)}}); }
  void add_artifact(const fs::path& p) { artifacts_.push_back(p.string()); }

  fs::path required_path(const std::string& key) const {
    const auto v = cfg_.find(key);
    if (!v || v->empty()) throw Failure{kConfigError, "missing config key '" + key + "'"};
    return *v;
  }

  /// Manifest goes next to the output directory so output trees stay
  /// byte-reproducible.
  void write_manifest(int exit_code) const {
    json m;
    m["command"] = command_;
    m["tool_version"] = kToolVersion;
    m["config"] = cfg_.values();
    m["seeds"] = {{"seed", seed_}};
    m["inputs"] = inputs_;
    m["artifacts"] = artifacts_;
    m["camera"] = "image_2";
    m["lidar_channels"] = {"adm", "range", "hit"};
    m["started_at"] = started_;
    m["finished_at"] = utc_timestamp();
    m["exit_code"] = exit_code;
    fs::path path = out_dir_;
    if (!path.has_filename()) path = path.parent_path();
    path += ".manifest.json";
    const std::string text = m.dump(2) + "\n";
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

 private:
  std::string command_;
  Config cfg_;
  fs::path out_dir_;
  std::uint64_t seed_;
  std::string started_;
  json inputs_ = json::array();
  json artifacts_ = json::array();
};

constexpr std::string_view kKnownKeys[] = {
    "seed", "out_dir", "data_dir", "unlabeled_dir", "eval_dir", "checkpoint", "predictions_dir",
    "adm_dir", "synth.count", "synth.height", "synth.width", "synth.obstacles", "synth.noise",
    "synth.with_gt", "adapt.radius", "adapt.max_ring", "adapt.lo_pct", "adapt.hi_pct",
    "adapt.range_scale", "train.steps", "train.lr", "train.momentum", "train.hflip", "loss.alpha",
    "loss.beta", "loss.gamma", "model.fuse_all_levels", "model.init_scale", "semi.tau",
    "semi.rounds", "semi.steps_per_round", "semi.labeled_mix", "eval.prefix", "eval.threshold"};

void reject_unknown_keys(const Config& c) {
  for (const auto& [key, value] : c.values()) {
    if (std::find(std::begin(kKnownKeys), std::end(kKnownKeys), key) == std::end(kKnownKeys)) {
      throw Failure{kConfigError, "unknown config key '" + key + "'"};
    }
  }
}

AdaptConfig adapt_config(const Config& c) {
  AdaptConfig a;
  a.radius = static_cast<int>(c.get_int("adapt.radius", a.radius));
  a.max_ring = static_cast<int>(c.get_int("adapt.max_ring", a.max_ring));
  a.lo_pct = c.get_double("adapt.lo_pct", a.lo_pct);
  a.hi_pct = c.get_double("adapt.hi_pct", a.hi_pct);
  a.range_scale = c.get_double("adapt.range_scale", a.range_scale);
  if (a.radius < 1 || a.max_ring < 0 || !(a.lo_pct >= 0 && a.lo_pct < a.hi_pct && a.hi_pct <= 100) ||
      !(a.range_scale > 0)) {
    throw Failure{kConfigError, "invalid adapt.* settings"};
  }
  return a;
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  m.fuse_all_levels = c.get_bool("model.fuse_all_levels", m.fuse_all_levels);
  m.init_scale = c.get_double("model.init_scale", m.init_scale);
  return m;
}

LossWeights loss_weights(const Config& c) {
  LossWeights w;
  w.alpha = c.get_double("loss.alpha", w.alpha);
  w.beta = c.get_double("loss.beta", w.beta);
  w.gamma = c.get_double("loss.gamma", w.gamma);
  try {
    w.validate();
  } catch (const Error& e) {
    throw Failure{kConfigError, e.what()};
  }
  return w;
}

TrainConfig train_config(const Run& run) {
  const Config& c = run.cfg();
  TrainConfig t;
  t.steps = static_cast<int>(c.get_int("train.steps", t.steps));
  t.lr = c.get_double("train.lr", t.lr);
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.hflip = c.get_bool("train.hflip", t.hflip);
  t.seed = run.seed();
  t.loss_weights = loss_weights(c);
  t.model = model_config(c);
  t.adapt = adapt_config(c);
  if (t.steps < 0 || !(t.lr > 0) || !(t.momentum >= 0 && t.momentum < 1)) {
    throw Failure{kConfigError, "invalid train.* settings"};
  }
  return t;
}

SemiConfig semi_config(const Run& run) {
  const Config& c = run.cfg();
  SemiConfig s;
  s.tau = c.get_double("semi.tau", s.tau);
  s.rounds = static_cast<int>(c.get_int("semi.rounds", s.rounds));
  s.steps_per_round = static_cast<int>(c.get_int("semi.steps_per_round", s.steps_per_round));
  s.labeled_mix = c.get_double("semi.labeled_mix", s.labeled_mix);
  s.lr = c.get_double("train.lr", s.lr);
  s.momentum = c.get_double("train.momentum", s.momentum);
  s.hflip = c.get_bool("train.hflip", s.hflip);
  s.seed = run.seed();
  s.loss_weights = loss_weights(c);
  try {
    s.validate();
  } catch (const Error& e) {
    throw Failure{kConfigError, e.what()};
  }
  return s;
}

std::vector<std::string> frame_ids(const fs::path& dir, const std::string& prefix) {
  std::vector<std::string> ids;
  for (auto& id : list_frames(dir)) {
    if (id.rfind(prefix, 0) == 0) ids.push_back(std::move(id));
  }
  return ids;
}

template <class Fn>
auto frame_guard(const std::string& id, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Failure{kDataError, "frame " + id + ": " + e.what()};
  }
}

std::vector<FrameBundle> load_frames(const fs::path& dir, const std::vector<std::string>& ids,
                                     bool require_gt) {
  std::vector<FrameBundle> frames(ids.size());
  std::vector<std::optional<Failure>> failures(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) {
    try {
      frames[i] = frame_guard(ids[i], [&] { return load_frame(dir, ids[i]); });
      if (require_gt && !frames[i].gt) throw Failure{kDataError, "frame " + ids[i] + ": no ground truth"};
    } catch (const Failure& f) {
      failures[i] = f;
    }
  });
  for (const auto& f : failures) {
    if (f) throw *f;
  }
  return frames;
}

/// Prepares frames; with `adm_dir` the ADM channel is read from the PNGs
/// written by `adapt` instead of being recomputed.
std::vector<PreparedFrame> load_prepared(const Run& run, const fs::path& dir, bool require_gt,
                                         const std::string& prefix = "") {
  const auto ids = frame_ids(dir, prefix);
  const auto frames = load_frames(dir, ids, require_gt);
  const AdaptConfig adapt = adapt_config(run.cfg());
  const auto adm_dir = run.cfg().find("adm_dir");
  std::vector<PreparedFrame> out(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameBundle& f = frames[i];
    out[i] = frame_guard(f.frame_id, [&] {
      LidarChannels lidar = adapt_lidar(f.cloud, f.calib, f.image.height, f.image.width, adapt);
      if (adm_dir && !adm_dir->empty()) {
        const fs::path root(*adm_dir);
        lidar.adm_channel = to_unit_gray(read_png(root / "adm" / (f.frame_id + ".png")));
        if (lidar.adm_channel.rows() != f.image.height || lidar.adm_channel.cols() != f.image.width) {
          throw Error(ErrorCode::ShapeMismatch, "ADM size differs from image");
        }
      }
      PreparedFrame p;
      p.frame_id = f.frame_id;
      p.inputs = make_inputs(f.image, lidar, f.depth);
      p.gt = f.gt;
      return p;
    });
  }
  return out;
}

ModelParams load_checkpoint(Run& run) {
  const auto path = run.cfg().find("checkpoint");
  if (!path || path->empty() || !fs::exists(*path)) {
    throw Failure{kOrderingError, "a supervised checkpoint is required (config key 'checkpoint')"};
  }
  run.add_input(*path);
  try {
    return ModelParams::load(fs::path(*path), model_config(run.cfg()));
  } catch (const Error& e) {
    throw Failure{kDataError, std::string("checkpoint: ") + e.what()};
  }
}

void write_text(Run& run, const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  run.add_artifact(path);
}

int cmd_synth(Run& run) {
  const Config& c = run.cfg();
  SynthConfig sc;
  sc.height = static_cast<int>(c.get_int("synth.height", sc.height));
  sc.width = static_cast<int>(c.get_int("synth.width", sc.width));
  sc.obstacle_count = static_cast<int>(c.get_int("synth.obstacles", sc.obstacle_count));
  sc.noise_level = c.get_double("synth.noise", sc.noise_level);
  const long long count = c.get_int("synth.count", 40);
  const bool with_gt = c.get_bool("synth.with_gt", true);
  if (count < 0 || sc.height < 32 || sc.width < 32 || sc.obstacle_count < 0 || sc.noise_level < 0) {
    throw Failure{kConfigError, "invalid synth.* settings"};
  }
  std::vector<std::string> dirs{"image_2", "velodyne", "calib", "depth"};
  if (with_gt) dirs.push_back("gt_image_2");
  for (const auto& d : dirs) {
    std::error_code ec;
    fs::create_directories(run.out() / d, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + (run.out() / d).string());
  }
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    FrameBundle frame = synth_scene(hash_combine(run.seed(), i), sc);
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%06zu", i);
    frame.frame_id = id;
    if (!with_gt) frame.gt.reset();
    save_frame(run.out(), frame);
  });
  run.add_artifact(run.out());
  std::cout << "wrote " << count << " frames to " << run.out().string() << "\n";
  return kOk;
}

int cmd_adapt(Run& run) {
  const fs::path input = run.required_path("data_dir");
  const AdaptConfig adapt = adapt_config(run.cfg());
  const auto ids = list_frames(input);
  if (ids.empty()) return kOk;
  run.add_input(input);
  for (const auto& id : ids) {
    const LidarChannels lidar = frame_guard(id, [&] {
      const PngData image = read_png(input / "image_2" / (id + ".png"));
      const PointCloud cloud = read_point_cloud(read_file(input / "velodyne" / (id + ".bin")));
      const auto text = read_file(input / "calib" / (id + ".txt"));
      const CameraCalibration calib = parse_calibration(
          std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
      return adapt_lidar(cloud, calib, image.height, image.width, adapt);
    });
    Image8 valid(static_cast<int>(lidar.adm.valid.rows()), static_cast<int>(lidar.adm.valid.cols()), 1);
    for (Eigen::Index i = 0; i < lidar.adm.valid.size(); ++i) {
      valid.pixels[i] = lidar.adm.valid.data()[i] ? 255 : 0;
    }
    const fs::path adm_path = run.out() / "adm" / (id + ".png");
    const fs::path valid_path = run.out() / "adm_valid" / (id + ".png");
    write_png16(adm_path, quantize_adm(lidar.adm));
    write_png(valid_path, valid);
    run.add_artifact(adm_path);
    run.add_artifact(valid_path);
  }
  std::cout << "adapted " << ids.size() << " frames\n";
  return kOk;
}

int cmd_train(Run& run) {
  const fs::path data = run.required_path("data_dir");
  const TrainConfig tc = train_config(run);
  run.add_input(data);
  const auto frames = load_prepared(run, data, true);
  if (frames.empty()) throw Failure{kDataError, "no labeled frames in " + data.string()};
  const TrainResult result = frame_guard("(training set)", [&] { return train_supervised(frames, tc); });
  const fs::path ckpt = run.out() / "model.ckpt";
  result.params.save(ckpt);
  run.add_artifact(ckpt);
  write_text(run, run.out() / "loss_log.csv", loss_log_csv(result.log));
  if (!result.log.empty()) {
    std::cout << "trained " << tc.steps << " steps, final loss " << result.log.back().total << "\n";
  }
  return kOk;
}

int cmd_pseudo(Run& run) {
  const ModelParams init = load_checkpoint(run);
  const SemiConfig sc = semi_config(run);
  const fs::path labeled_dir = run.required_path("data_dir");
  run.add_input(labeled_dir);
  const auto labeled = load_prepared(run, labeled_dir, true);
  if (labeled.empty()) throw Failure{kDataError, "no labeled frames in " + labeled_dir.string()};
  std::vector<PreparedFrame> unlabeled, heldout;
  if (const auto u = run.cfg().find("unlabeled_dir"); u && !u->empty()) {
    run.add_input(*u);
    unlabeled = load_prepared(run, *u, false);
  }
  if (const auto e = run.cfg().find("eval_dir"); e && !e->empty()) {
    run.add_input(*e);
    heldout = load_prepared(run, *e, true, run.cfg().get_string("eval.prefix", ""));
  }
  const SemiResult result = frame_guard("(semi-supervised set)", [&] {
    return semi_supervised_rounds(init, labeled, unlabeled, sc, heldout);
  });
  const fs::path ckpt = run.out() / "model.ckpt";
  result.params.save(ckpt);
  run.add_artifact(ckpt);
  std::string lines;
  for (const auto& r : result.rounds) lines += r.to_json_line() + "\n";
  write_text(run, run.out() / "rounds.jsonl", lines);
  std::cout << "completed " << result.rounds.size() << " pseudo-label rounds\n";
  return kOk;
}

struct Predictions {
  std::vector<std::string> ids;
  std::vector<GridD> probs;
  std::vector<FrameBundle> frames;
};

Predictions predict(Run& run) {
  const fs::path eval_dir = run.required_path("eval_dir");
  run.add_input(eval_dir);
  const std::string prefix = run.cfg().get_string("eval.prefix", "");
  Predictions p;
  p.ids = frame_ids(eval_dir, prefix);
  p.frames = load_frames(eval_dir, p.ids, true);
  if (const auto pred_dir = run.cfg().find("predictions_dir"); pred_dir && !pred_dir->empty()) {
    run.add_input(*pred_dir);
    for (const auto& id : p.ids) {
      p.probs.push_back(frame_guard(id, [&] {
        return to_unit_gray(read_png(fs::path(*pred_dir) / (id + ".png")));
      }));
    }
    return p;
  }
  const ModelParams params = load_checkpoint(run).frozen();
  const auto prepared = load_prepared(run, eval_dir, true, prefix);
  p.probs.resize(prepared.size());
  parallel_for(prepared.size(), [&](std::size_t i) {
    const ModelOutputs out = forward(params, prepared[i].inputs);
    p.probs[i] = to_grid(out.fine, out.height, out.width);
  });
  return p;
}

int cmd_eval(Run& run) {
  const Predictions p = predict(run);
  if (p.ids.empty()) throw Failure{kDataError, "no evaluation frames"};
  std::vector<GroundTruthMask> gts;
  for (const auto& f : p.frames) gts.push_back(*f.gt);
  const EvalResult result = frame_guard("(evaluation set)", [&] { return evaluate_predictions(p.probs, gts); });
  write_text(run, run.out() / "eval_report.csv", report_csv(result));
  write_text(run, run.out() / "summary.txt", summary_line(result) + "\n");
  std::cout << summary_line(result) << "\n";
  return kOk;
}

int cmd_visualize(Run& run) {
  const Predictions p = predict(run);
  const double threshold = run.cfg().get_double("eval.threshold", 0.5);
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    const FrameBundle& f = p.frames[i];
    const Image8 img = frame_guard(p.ids[i], [&] {
      return overlay(f.image, p.probs[i], f.gt ? &*f.gt : nullptr, threshold);
    });
    const fs::path path = run.out() / "overlay" / (p.ids[i] + ".png");
    write_png(path, img);
    run.add_artifact(path);
  }
  std::cout << "wrote " << p.ids.size() << " overlays\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-source road segmentation pipeline", "udeer"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  long long seed = 0;
  app.add_option("command", command, "synth | adapt | train | pseudo | eval | visualize")
      ->required()
      ->check(CLI::IsMember({"synth", "adapt", "train", "pseudo", "eval", "visualize"}));
  app.add_option("--config", config_path, "key = value configuration file")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides out_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "seed (overrides seed)");

  std::vector<std::string> argv_storage = args;
  argv_storage.insert(argv_storage.begin(), "udeer");
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  std::optional<Run> run;
  try {
    Config cfg = Config::load(config_path);
    reject_unknown_keys(cfg);
    if (out_opt->count() > 0) cfg.set("out_dir", out_dir);
    if (seed_opt->count() > 0) cfg.set("seed", std::to_string(seed));
    const auto out = cfg.find("out_dir");
    if (!out || out->empty()) throw Failure{kConfigError, "no output directory (--out or out_dir)"};
    const auto seed_value = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
    run.emplace(command, cfg, config_path, *out, seed_value);

    int rc = kOk;
    if (command == "synth") rc = cmd_synth(*run);
    else if (command == "adapt") rc = cmd_adapt(*run);
    else if (command == "train") rc = cmd_train(*run);
    else if (command == "pseudo") rc = cmd_pseudo(*run);
    else if (command == "eval") rc = cmd_eval(*run);
    else rc = cmd_visualize(*run);
    run->write_manifest(rc);
    return rc;
  } catch (const Failure& f) {
    std::cerr << "udeer " << command << ": " << f.message << "\n";
    if (run) {
      try {
        run->write_manifest(f.code);
      } catch (...) {
      }
    }
    return f.code;
  } catch (const Error& e) {
    std::cerr << "udeer " << command << ": " << e.what() << "\n";
    int code = kDataError;
    if (e.code() == ErrorCode::Io) code = kIoError;
    if (e.code() == ErrorCode::Config) code = kConfigError;
    return code;
  } catch (const std::exception& e) {
    std::cerr << "udeer " << command << ": " << e.what() << "\n";
    return kIoError;
  }
}

}  // namespace udeer::cli

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

#include "support.hpp"
#include "udeer/error.hpp"
#include "udeer/semi_supervised.hpp"
#include "udeer/synth.hpp"

namespace udeer {
namespace {

std::vector<PreparedFrame> small_frames(int count, std::uint64_t seed, bool keep_gt = true) {
  SynthConfig cfg;
  cfg.height = 32;
  cfg.width = 64;
  std::vector<FrameBundle> frames;
  for (int i = 0; i < count; ++i) {
    frames.push_back(synth_scene(hash_combine(seed, i), cfg));
    if (!keep_gt) frames.back().gt.reset();
  }
  return prepare_frames(frames, AdaptConfig{});
}

ModelOutputs random_outputs(CounterRng& rng, int h, int w) {
  ModelOutputs out;
  out.height = h;
  out.width = w;
  for (DiffTensor* m : {&out.fine, &out.image_aux, &out.lidar_aux, &out.depth_aux}) {
    *m = testing::random_tensor(rng, {1, 1, h, w}, 0.0, 1.0);
  }
  return out;
}

TEST(PseudoLabels, ZeroThresholdIncludesEverything) {
  CounterRng rng(1);
  const auto s = pseudo_labels_from_prob(testing::random_grid(rng, 6, 7), 0.0);
  EXPECT_TRUE(s.included.all());
  EXPECT_EQ(s.included_fraction(), 1.0);
}

TEST(PseudoLabels, UnitThresholdOnlyKeepsSaturatedPixels) {
  GridD p(1, 4);
  p << 0.0, 0.999, 0.5, 1.0;
  const auto s = pseudo_labels_from_prob(p, 1.0);
  EXPECT_TRUE(s.included(0, 0));
  EXPECT_FALSE(s.included(0, 1));
  EXPECT_FALSE(s.included(0, 2));
  EXPECT_TRUE(s.included(0, 3));
}

TEST(PseudoLabels, HandEvaluatedRow) {
  GridD p(1, 3);
  p << 0.95, 0.60, 0.10;
  const auto s = pseudo_labels_from_prob(p, 0.8);
  EXPECT_EQ(s.labels(0, 0), 1.0);
  EXPECT_EQ(s.labels(0, 1), 1.0);
  EXPECT_EQ(s.labels(0, 2), 0.0);
  EXPECT_EQ(s.confidence(0, 0), 0.95);
  EXPECT_EQ(s.confidence(0, 1), 0.60);
  EXPECT_EQ(s.confidence(0, 2), 1.0 - 0.10);
  EXPECT_TRUE(s.included(0, 0));
  EXPECT_FALSE(s.included(0, 1));
  EXPECT_TRUE(s.included(0, 2));
}

TEST(PseudoLabels, RandomMapsMatchScalarRule) {
  CounterRng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const GridD p = testing::random_grid(rng, 5, 9);
    const double tau = rng.uniform(0.5, 1.0);
    const auto s = pseudo_labels_from_prob(p, tau);
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double v = p.data()[i];
      const double conf = v >= 0.5 ? v : 1.0 - v;
      EXPECT_EQ(s.labels.data()[i], v >= 0.5 ? 1.0 : 0.0);
      EXPECT_EQ(s.confidence.data()[i], conf);
      EXPECT_EQ(s.included.data()[i], conf >= tau);
    }
  }
}

TEST(PseudoLabels, InclusionShrinksAsThresholdRises) {
  CounterRng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const GridD p = testing::random_grid(rng, 8, 8);
    GridB previous = GridB::Constant(8, 8, true);
    for (double tau = 0.0; tau <= 1.0; tau += 0.05) {
      const GridB current = pseudo_labels_from_prob(p, tau).included;
      EXPECT_TRUE((current <= previous).all());
      previous = current;
    }
  }
}

TEST(PseudoLoss, EmptySetGivesZeroLossAndGradients) {
  CounterRng rng(4);
  ModelParams params = ModelParams::initialize(ModelConfig{}, 4);
  const ModelOutputs out = forward(params, testing::random_inputs(rng, 16, 16));
  PseudoLabelSet none = pseudo_labels_from_prob(testing::random_grid(rng, 16, 16), 0.5);
  none.included.setConstant(false);
  const DiffTensor loss = pseudo_loss(out, none, LossWeights{});
  EXPECT_EQ(loss.item(), 0.0);
  backward(loss);
  for (const auto& p : params.parameters()) {
    if (p.value.has_grad()) EXPECT_TRUE((p.value.grad().array() == 0.0).all()) << p.name;
  }
}

TEST(PseudoLoss, FullSetEqualsSupervisedLossOnPseudoLabels) {
  CounterRng rng(5);
  const ModelOutputs out = random_outputs(rng, 6, 6);
  const PseudoLabelSet all = pseudo_labels_from_prob(testing::random_grid(rng, 6, 6), 0.0);
  GroundTruthMask gt{all.labels.cast<std::uint8_t>()};
  EXPECT_EQ(pseudo_loss(out, all, LossWeights{}).item(), total_loss(out, gt, LossWeights{}).item());
}

TEST(PseudoLoss, RandomInstanceMatchesOracleRestrictedToIncludedSet) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CounterRng rng(seed);
    const ModelOutputs out = random_outputs(rng, 7, 5);
    const PseudoLabelSet s = pseudo_labels_from_prob(testing::random_grid(rng, 7, 5), 0.8);
    const Eigen::ArrayXd target = flat(s.labels);
    const Eigen::ArrayXd weight = flat(GridD(s.included.cast<double>()));
    const double expected = testing::bce_oracle(out.fine.data(), target, weight) +
                            0.4 * testing::bce_oracle(out.image_aux.data(), target, weight) +
                            0.4 * testing::bce_oracle(out.lidar_aux.data(), target, weight) +
                            0.4 * testing::bce_oracle(out.depth_aux.data(), target, weight);
    const DiffTensor loss = pseudo_loss(out, s, LossWeights{});
    EXPECT_NEAR(loss.item(), expected, 1e-12);
    backward(loss);
    for (Eigen::Index i = 0; i < weight.size(); ++i) {
      if (weight[i] != 0.0) continue;
      for (const DiffTensor* m : {&out.fine, &out.image_aux, &out.lidar_aux, &out.depth_aux}) {
        EXPECT_EQ(m->grad()[i], 0.0);
      }
    }
  }
}

TEST(Rounds, ZeroRoundsReturnsInit) {
  const ModelParams init = ModelParams::initialize(ModelConfig{}, 2);
  SemiConfig cfg;
  cfg.rounds = 0;
  const auto labeled = small_frames(2, 1);
  const auto result = semi_supervised_rounds(init, labeled, small_frames(2, 2, false), cfg);
  EXPECT_TRUE(result.params.bitwise_equal(init));
  EXPECT_TRUE(result.rounds.empty());
}

TEST(Rounds, EmptyPoolOnlyTakesLabeledSteps) {
  const ModelParams init = ModelParams::initialize(ModelConfig{}, 2);
  SemiConfig cfg;
  cfg.rounds = 2;
  cfg.steps_per_round = 3;
  cfg.labeled_mix = 0.01;
  const auto result = semi_supervised_rounds(init, small_frames(2, 1), {}, cfg);
  ASSERT_EQ(result.rounds.size(), 2u);
  for (const auto& r : result.rounds) {
    EXPECT_TRUE(r.labeled_loss.has_value());
    EXPECT_FALSE(r.pseudo_loss.has_value());
    EXPECT_FALSE(r.mean_confidence.has_value());
  }
  EXPECT_FALSE(result.params.bitwise_equal(init));
}

TEST(Rounds, DeterministicAndReported) {
  const ModelParams init = ModelParams::initialize(ModelConfig{}, 3);
  SemiConfig cfg;
  cfg.rounds = 2;
  cfg.steps_per_round = 4;
  const auto labeled = small_frames(2, 7);
  const auto unlabeled = small_frames(3, 8, false);
  const auto heldout = small_frames(1, 9);
  const auto a = semi_supervised_rounds(init, labeled, unlabeled, cfg, heldout);
  const auto b = semi_supervised_rounds(init, labeled, unlabeled, cfg, heldout);
  EXPECT_TRUE(a.params.bitwise_equal(b.params));
  ASSERT_EQ(a.rounds.size(), 2u);
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    EXPECT_EQ(a.rounds[i].to_json_line(), b.rounds[i].to_json_line());
    EXPECT_TRUE(a.rounds[i].heldout_maxf.has_value());
    ASSERT_TRUE(a.rounds[i].mean_confidence.has_value());
    EXPECT_GE(*a.rounds[i].mean_confidence, 0.5);
  }
}

TEST(Rounds, PreconditionsAreChecked) {
  const ModelParams init = ModelParams::initialize(ModelConfig{}, 3);
  try {
    semi_supervised_rounds(init, {}, {}, SemiConfig{});
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyLabeledSet);
  }
  SemiConfig bad;
  bad.tau = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  bad = SemiConfig{};
  bad.labeled_mix = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Report, JsonLineUsesNullForMissingValues) {
  RoundReport r;
  r.round = 2;
  r.labeled_loss = 0.25;
  EXPECT_EQ(r.to_json_line(),
            "{\"round\":2,\"mean_confidence\":null,\"included_fraction\":null,"
            "\"labeled_loss\":0.25,\"pseudo_loss\":null,\"heldout_maxf\":null}");
}

}  // namespace
}  // namespace udeer

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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "udeer/model.hpp"

namespace udeer {

/// Pseudo labels for one unlabeled frame. `included` is the set of pixels
/// whose confidence reaches tau; only those contribute to the loss.
struct PseudoLabelSet {
  GridD labels;      // 0 or 1
  GridD confidence;  // max(p, 1 - p), in [0.5, 1]
  GridB included;
  double tau = 0.0;

  double included_fraction() const;
  bool operator==(const PseudoLabelSet& o) const;
};

/// label = (p >= 0.5), confidence = max(p, 1 - p), included = confidence >= tau.
PseudoLabelSet pseudo_labels_from_prob(const GridD& fine_prob, double tau);
PseudoLabelSet generate_pseudo_labels(const ModelParams& params, const PreparedFrame& frame,
                                      double tau);

/// Supervised loss against the pseudo labels with `included` as the weight
/// mask. An empty inclusion set gives 0 and zero gradients.
LossTerms pseudo_loss_terms(const ModelOutputs& out, const PseudoLabelSet& pseudo,
                            const LossWeights& w);
DiffTensor pseudo_loss(const ModelOutputs& out, const PseudoLabelSet& pseudo, const LossWeights& w);

struct SemiConfig {
  double tau = 0.9;
  int rounds = 3;
  int steps_per_round = 100;
  double labeled_mix = 0.5;
  std::uint64_t seed = 1;
  double lr = 0.05;
  double momentum = 0.9;
  LossWeights loss_weights;
  bool hflip = true;

  void validate() const;
};

struct RoundReport {
  int round = 0;
  std::optional<double> mean_confidence;    // absent without unlabeled frames
  std::optional<double> included_fraction;
  std::optional<double> labeled_loss;  // mean over labeled steps, if any
  std::optional<double> pseudo_loss;   // mean over pseudo steps, if any
  std::optional<double> heldout_maxf;

  /// {"round":..,"mean_confidence":..,"included_fraction":..,
  ///  "labeled_loss":..,"pseudo_loss":..,"heldout_maxf":..}
  std::string to_json_line() const;
};

struct SemiResult {
  ModelParams params;
  std::vector<RoundReport> rounds;
};

/// Each round regenerates pseudo labels for all unlabeled frames with the
/// current model, then takes steps_per_round steps; each step picks a labeled
/// frame with probability labeled_mix (or always, when no unlabeled frames
/// exist) and otherwise an unlabeled one. `heldout` frames, when given, are
/// scored after every round.
SemiResult semi_supervised_rounds(const ModelParams& init, std::span<const PreparedFrame> labeled,
                                  std::span<const PreparedFrame> unlabeled, const SemiConfig& cfg,
                                  std::span<const PreparedFrame> heldout = {});

}  // namespace udeer

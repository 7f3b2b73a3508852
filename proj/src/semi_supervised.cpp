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

#include "udeer/semi_supervised.hpp"

#include <algorithm>
#include <cmath>

#include "udeer/error.hpp"
#include "udeer/evaluation.hpp"
#include "udeer/format.hpp"
#include "udeer/parallel.hpp"
#include "udeer/rng.hpp"

namespace udeer {
namespace {

PseudoLabelSet flip(const PseudoLabelSet& p) {
  return {p.labels.rowwise().reverse(), p.confidence.rowwise().reverse(),
          p.included.rowwise().reverse(), p.tau};
}

std::string json_number(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return "null";
  return format_number(*v);
}

}  // namespace

double PseudoLabelSet::included_fraction() const {
  return included.size() == 0 ? 0.0 : static_cast<double>(included.count()) / included.size();
}

bool PseudoLabelSet::operator==(const PseudoLabelSet& o) const {
  return tau == o.tau && labels.rows() == o.labels.rows() && labels.cols() == o.labels.cols() &&
         (labels == o.labels).all() && (confidence == o.confidence).all() &&
         (included == o.included).all();
}

PseudoLabelSet pseudo_labels_from_prob(const GridD& fine_prob, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must be in [0, 1]");
  PseudoLabelSet out;
  out.tau = tau;
  out.labels = (fine_prob >= 0.5).cast<double>();
  out.confidence = fine_prob.max(1.0 - fine_prob);
  out.included = out.confidence >= tau;
  return out;
}

PseudoLabelSet generate_pseudo_labels(const ModelParams& params, const PreparedFrame& frame,
                                      double tau) {
  const ModelOutputs out = forward(params, frame.inputs);
  return pseudo_labels_from_prob(to_grid(out.fine, out.height, out.width), tau);
}

LossTerms pseudo_loss_terms(const ModelOutputs& out, const PseudoLabelSet& pseudo,
                            const LossWeights& w) {
  if (pseudo.labels.rows() != out.height || pseudo.labels.cols() != out.width) {
    throw Error(ErrorCode::ShapeMismatch, "pseudo labels differ in size from outputs");
  }
  const GridD weight = pseudo.included.cast<double>();
  return weighted_loss(out, flat(pseudo.labels), flat(weight), w);
}

DiffTensor pseudo_loss(const ModelOutputs& out, const PseudoLabelSet& pseudo, const LossWeights& w) {
  return pseudo_loss_terms(out, pseudo, w).total;
}

void SemiConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must be in [0, 1]");
  if (rounds < 0) throw Error(ErrorCode::InvalidArgument, "rounds must be >= 0");
  if (steps_per_round < 1) throw Error(ErrorCode::InvalidArgument, "steps_per_round must be >= 1");
  if (!(labeled_mix > 0.0 && labeled_mix <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "labeled_mix must be in (0, 1]");
  }
  loss_weights.validate();
}

std::string RoundReport::to_json_line() const {
  return "{\"round\":" + std::to_string(round) +
         ",\"mean_confidence\":" + json_number(mean_confidence) +
         ",\"included_fraction\":" + json_number(included_fraction) +
         ",\"labeled_loss\":" + json_number(labeled_loss) +
         ",\"pseudo_loss\":" + json_number(pseudo_loss) +
         ",\"heldout_maxf\":" + json_number(heldout_maxf) + "}";
}

SemiResult semi_supervised_rounds(const ModelParams& init, std::span<const PreparedFrame> labeled,
                                  std::span<const PreparedFrame> unlabeled, const SemiConfig& cfg,
                                  std::span<const PreparedFrame> heldout) {
  cfg.validate();
  if (labeled.empty()) throw Error(ErrorCode::EmptyLabeledSet, "semi-supervised rounds need labels");
  SemiResult result{init, {}};
  if (cfg.rounds == 0) return result;

  TrainConfig step_cfg;
  step_cfg.lr = cfg.lr;
  step_cfg.momentum = cfg.momentum;
  step_cfg.loss_weights = cfg.loss_weights;

  std::vector<PreparedFrame> labeled_flipped, unlabeled_flipped;
  if (cfg.hflip) {
    for (const auto& f : labeled) labeled_flipped.push_back(hflip(f));
    for (const auto& f : unlabeled) unlabeled_flipped.push_back(hflip(f));
  }

  CounterRng rng(hash_combine(cfg.seed, 0x53454d49ULL));
  int step = 0;
  for (int round = 1; round <= cfg.rounds; ++round) {
    // Labels come from the current model and are replaced every round.
    const ModelParams teacher = result.params.frozen();
    std::vector<PseudoLabelSet> pseudo(unlabeled.size());
    parallel_for(unlabeled.size(), [&](std::size_t i) {
      pseudo[i] = generate_pseudo_labels(teacher, unlabeled[i], cfg.tau);
    });

    RoundReport report;
    report.round = round;
    if (!pseudo.empty()) {
      double conf = 0.0, incl = 0.0;
      for (const auto& p : pseudo) {
        conf += p.confidence.mean();
        incl += p.included_fraction();
      }
      report.mean_confidence = conf / pseudo.size();
      report.included_fraction = incl / pseudo.size();
    }

    double labeled_sum = 0.0, pseudo_sum = 0.0;
    int labeled_steps = 0, pseudo_steps = 0;
    for (int s = 0; s < cfg.steps_per_round; ++s, ++step) {
      const bool use_labeled = unlabeled.empty() || rng.uniform() < cfg.labeled_mix;
      const bool flip = cfg.hflip && (rng.next_u64() & 1U);
      if (use_labeled) {
        const std::size_t idx = rng.below(labeled.size());
        const PreparedFrame& frame = flip ? labeled_flipped[idx] : labeled[idx];
        labeled_sum += supervised_step(result.params, frame, step_cfg, step).total;
        ++labeled_steps;
      } else {
        const std::size_t idx = rng.below(unlabeled.size());
        const PreparedFrame& frame = flip ? unlabeled_flipped[idx] : unlabeled[idx];
        const PseudoLabelSet target = flip ? udeer::flip(pseudo[idx]) : pseudo[idx];
        const ModelOutputs out = forward(result.params, frame.inputs);
        const LossTerms terms = pseudo_loss_terms(out, target, cfg.loss_weights);
        backward(terms.total);
        sgd_step(result.params.parameters(), cfg.lr, cfg.momentum);
        pseudo_sum += terms.total.item();
        ++pseudo_steps;
      }
    }
    if (labeled_steps > 0) report.labeled_loss = labeled_sum / labeled_steps;
    if (pseudo_steps > 0) report.pseudo_loss = pseudo_sum / pseudo_steps;
    if (!heldout.empty()) report.heldout_maxf = evaluate_set(result.params, heldout).max_f;
    result.rounds.push_back(report);
  }
  return result;
}

}  // namespace udeer

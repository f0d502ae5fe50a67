// Copyright 2026 The eend-attractors Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "eend/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eend/assignment.hpp"

namespace eend {

std::vector<double> PairwiseBceCost(const Tensor& posteriors, const Tensor& labels) {
  const std::size_t speakers = posteriors.rows(), frames = posteriors.cols();
  std::vector<double> cost(speakers * speakers, 0.0);
  auto pv = posteriors.values();
  auto lv = labels.values();
  for (std::size_t i = 0; i < speakers; ++i) {
    for (std::size_t j = 0; j < speakers; ++j) {
      double c = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        const double p = std::clamp(pv[i * frames + t], kProbClamp, 1.0 - kProbClamp);
        const double y = lv[j * frames + t];
        c -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
      }
      cost[i * speakers + j] = c;
    }
  }
  return cost;
}

std::vector<std::size_t> BestPermutationExhaustive(const std::vector<double>& cost,
                                                   std::size_t speakers) {
  std::vector<std::size_t> perm(speakers);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < speakers; ++i) c += cost[i * speakers + perm[i]];
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<std::size_t> BestPermutationHungarian(const std::vector<double>& cost,
                                                  std::size_t speakers) {
  return SolveAssignment(cost, speakers, speakers);
}

PitResult pit_bce(const Tensor& posteriors, const Tensor& labels) {
  if (posteriors.rows() != labels.rows() || posteriors.cols() != labels.cols()) {
    throw DimensionError("pit_bce: posteriors " + ShapeString(posteriors.shape()) +
                         " vs labels " + ShapeString(labels.shape()));
  }
  const std::size_t speakers = posteriors.rows();
  PitResult result;
  if (speakers == 0) {
    result.loss = Tensor::Scalar(0.0);
    return result;
  }
  const std::vector<double> cost = PairwiseBceCost(posteriors, labels);
  result.permutation = speakers <= kMaxExhaustivePitSpeakers
                           ? BestPermutationExhaustive(cost, speakers)
                           : BestPermutationHungarian(cost, speakers);
  result.loss = bce(posteriors, gather_rows(labels, result.permutation));
  return result;
}

Tensor existence_bce(const Tensor& logits, std::size_t speakers) {
  std::vector<double> targets(logits.numel(), 0.0);
  std::fill_n(targets.begin(), std::min(speakers, targets.size()), 1.0);
  return bce_with_logits(logits, Tensor::FromValues(logits.shape(), std::move(targets)));
}

LossBreakdown total_loss(const Tensor& final_posteriors, const Tensor& final_existence_logits,
                         const std::vector<LayerLossInput>& layers, const Tensor& labels,
                         const LossWeights& weights) {
  const std::size_t speakers = labels.rows();
  LossBreakdown out;
  PitResult pit = pit_bce(final_posteriors, labels);
  Tensor existence = existence_bce(final_existence_logits, speakers);
  out.diarization = pit.loss.item();
  out.existence = existence.item();
  out.best_permutation = std::move(pit.permutation);
  Tensor total = add(pit.loss, scale(existence, weights.alpha));
  if (!layers.empty() && weights.beta != 0.0) {
    std::vector<Tensor> per_layer;
    for (const LayerLossInput& layer : layers) {
      Tensor l = add(pit_bce(layer.posteriors, labels).loss,
                     scale(existence_bce(layer.existence_logits, speakers), weights.alpha));
      out.intermediate.push_back(l.item());
      per_layer.push_back(l);
    }
    Tensor stacked = concat_rows(per_layer);
    total = add(total, scale(mean(stacked), weights.beta));
  } else {
    for (const LayerLossInput& layer : layers) {
      out.intermediate.push_back(pit_bce(layer.posteriors, labels).loss.item() +
                                 weights.alpha *
                                     existence_bce(layer.existence_logits, speakers).item());
    }
  }
  out.total = total;
  return out;
}

}  // namespace eend

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

#ifndef EEND_LOSSES_HPP_
#define EEND_LOSSES_HPP_

#include <cstddef>
#include <vector>

#include "eend/tensor.hpp"

namespace eend {

// Exhaustive permutation search is used up to this many speakers.
inline constexpr std::size_t kMaxExhaustivePitSpeakers = 6;

struct PitResult {
  Tensor loss;                          // mean BCE under the best permutation
  std::vector<std::size_t> permutation;  // posterior row i <-> label row permutation[i]
};

// S x S matrix of summed per-frame BCE between posterior row i and label row j.
std::vector<double> PairwiseBceCost(const Tensor& posteriors, const Tensor& labels);

std::vector<std::size_t> BestPermutationExhaustive(const std::vector<double>& cost,
                                                   std::size_t speakers);
std::vector<std::size_t> BestPermutationHungarian(const std::vector<double>& cost,
                                                  std::size_t speakers);

// Permutation-invariant mean BCE. Exhaustive for S <= 6, Hungarian above.
PitResult pit_bce(const Tensor& posteriors, const Tensor& labels);

// Mean BCE of existence logits (slots x 1) against (1, ..., 1, 0, ...) with
// `speakers` leading ones.
Tensor existence_bce(const Tensor& logits, std::size_t speakers);

struct LossWeights {
  double alpha = 1.0;  // existence
  double beta = 1.0;   // intermediate
};

struct LayerLossInput {
  Tensor posteriors;
  Tensor existence_logits;
};

struct LossBreakdown {
  Tensor total;
  double diarization = 0.0;
  double existence = 0.0;
  // Per intermediate layer: its PIT BCE + alpha * its existence BCE.
  std::vector<double> intermediate;
  std::vector<std::size_t> best_permutation;
};

// total = diarization + alpha * existence + beta * mean(intermediate); every
// intermediate layer solves its own PIT assignment.
LossBreakdown total_loss(const Tensor& final_posteriors, const Tensor& final_existence_logits,
                         const std::vector<LayerLossInput>& layers, const Tensor& labels,
                         const LossWeights& weights);

}  // namespace eend

#endif  // EEND_LOSSES_HPP_

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

#ifndef EEND_TESTS_SUPPORT_ORACLES_HPP_
#define EEND_TESTS_SUPPORT_ORACLES_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eend/activity.hpp"
#include "eend/tensor.hpp"
#include "eend/tensor_io.hpp"

namespace eend::testing {

// Tolerances shared by every test and the acceptance suite.
inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradRelTol = 1e-4;
// Relative errors use max(|analytic|, |numeric|, kGradFloor) as denominator so
// that near-zero gradients are judged on absolute error.
inline constexpr double kGradFloor = 1e-3;
inline constexpr double kTightTol = 1e-12;
inline constexpr double kInvarianceTol = 1e-10;
inline constexpr double kConformerBreakMin = 1e-3;

Tensor RandomTensor(const Shape& shape, std::mt19937_64& rng, double scale = 1.0,
                    bool requires_grad = true);

// sum(y * W) for a fixed pseudo-random W derived from `seed`; turns any
// tensor into a scalar with a generic upstream gradient.
Tensor Project(const Tensor& y, std::uint64_t seed);

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]: analytic vs numeric"
  std::size_t checked = 0;
};

// Compares tape gradients of `loss` against central finite differences for
// every entry of every tensor in `wrt` (or a random subset of at most
// `max_entries` per tensor when non-zero).
GradReport CheckGradients(const std::function<Tensor()>& loss,
                          const std::vector<NamedTensor>& wrt, std::mt19937_64& rng,
                          std::size_t max_entries = 0);

// Mean clamped BCE between probabilities and 0/1 targets, plain loops.
double PlainBce(const std::vector<double>& probs, const std::vector<double>& targets);

struct PitOracle {
  double loss = 0.0;
  std::vector<std::size_t> permutation;  // posterior row i <-> label row permutation[i]
};
// Minimum over all S! label-row permutations of the mean BCE.
PitOracle BruteForcePit(const Tensor& posteriors, const Tensor& labels);

struct DerOracle {
  double ref_speech = 0, missed = 0, false_alarm = 0, confusion = 0;
  std::vector<std::size_t> mapping;  // per ref speaker: hyp index or kUnassigned
};
// Enumerates every partial injection ref -> hyp and keeps the one with the
// fewest confusion errors.
DerOracle BruteForceDer(const ActivityMatrix& ref, const ActivityMatrix& hyp);

ActivityMatrix RandomActivity(std::size_t speakers, std::size_t frames, double p_active,
                              std::mt19937_64& rng);

// |DFT| of a real frame, bins 0..n/2, by direct summation.
std::vector<double> NaiveDftMagnitude(const std::vector<double>& frame, std::size_t n);

}  // namespace eend::testing

#endif  // EEND_TESTS_SUPPORT_ORACLES_HPP_

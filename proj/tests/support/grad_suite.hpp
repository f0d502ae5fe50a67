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

#ifndef EEND_TESTS_SUPPORT_GRAD_SUITE_HPP_
#define EEND_TESTS_SUPPORT_GRAD_SUITE_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace eend::testing {

enum class GradGroup { kOp, kBlock, kAttractor, kLoss };

struct GradCase {
  std::string name;
  GradGroup group;
  // Builds one random instance from `rng` and checks it.
  std::function<GradReport(std::mt19937_64& rng)> run;
};

const std::vector<GradCase>& GradientCases();

// Worst report over `instances` random instances seeded from `seed`.
GradReport RunGradCase(const GradCase& c, std::uint64_t seed, int instances);

}  // namespace eend::testing

#endif  // EEND_TESTS_SUPPORT_GRAD_SUITE_HPP_

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "eend/assignment.hpp"
#include "eend/rng.hpp"

using namespace eend;

namespace {

// Minimum total cost over all injections of the smaller side into the larger.
double BruteForce(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  const std::size_t big = std::max(rows, cols), small = std::min(rows, cols);
  std::vector<std::size_t> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0;
    for (std::size_t i = 0; i < small; ++i) {
      total += rows <= cols ? cost[i * cols + perm[i]] : cost[perm[i] * cols + i];
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("hungarian equals brute force on random rectangular problems") {
  auto rng = MakeRng(5);
  std::uniform_int_distribution<std::size_t> size(1, 6);
  std::uniform_real_distribution<double> u(-3.0, 5.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t rows = size(rng), cols = size(rng);
    std::vector<double> cost(rows * cols);
    for (double& c : cost) c = u(rng);
    const auto assign = SolveAssignment(cost, rows, cols);
    REQUIRE(assign.size() == rows);
    double total = 0;
    std::vector<bool> used(cols, false);
    std::size_t assigned = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (assign[r] == kUnassigned) continue;
      REQUIRE(assign[r] < cols);
      CHECK(!used[assign[r]]);
      used[assign[r]] = true;
      total += cost[r * cols + assign[r]];
      ++assigned;
    }
    CHECK(assigned == std::min(rows, cols));
    CHECK(total == doctest::Approx(BruteForce(cost, rows, cols)).epsilon(1e-12));
  }
}

TEST_CASE("empty problems") {
  CHECK(SolveAssignment({}, 0, 3).empty());
  const auto a = SolveAssignment({}, 2, 0);
  CHECK(a == std::vector<std::size_t>{kUnassigned, kUnassigned});
}

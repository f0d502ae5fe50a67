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

#include "eend/assignment.hpp"

#include <limits>
#include <stdexcept>

namespace eend {

namespace {

// Classic potentials formulation for n <= m; a[i][j] indexed from 1.
std::vector<std::size_t> SolveWide(const std::vector<double>& cost, std::size_t n, std::size_t m,
                                   bool transposed) {
  const double inf = std::numeric_limits<double>::infinity();
  auto at = [&](std::size_t i, std::size_t j) {
    return transposed ? cost[j * n + i] : cost[i * m + j];
  };
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> match(n, kUnassigned);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) match[p[j] - 1] = j - 1;
  }
  return match;
}

}  // namespace

std::vector<std::size_t> SolveAssignment(const std::vector<double>& cost, std::size_t rows,
                                         std::size_t cols) {
  if (cost.size() != rows * cols) {
    throw std::invalid_argument("SolveAssignment: cost matrix size does not match shape");
  }
  if (rows == 0 || cols == 0) return std::vector<std::size_t>(rows, kUnassigned);
  if (rows <= cols) return SolveWide(cost, rows, cols, false);
  // Solve on the transpose, then invert the column->row matching.
  const std::vector<std::size_t> col_match = SolveWide(cost, cols, rows, true);
  std::vector<std::size_t> row_match(rows, kUnassigned);
  for (std::size_t c = 0; c < cols; ++c) row_match[col_match[c]] = c;
  return row_match;
}

}  // namespace eend

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

#ifndef EEND_ASSIGNMENT_HPP_
#define EEND_ASSIGNMENT_HPP_

#include <cstddef>
#include <vector>

namespace eend {

inline constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);

// Minimum-cost assignment (Hungarian / Kuhn-Munkres, O(n^2 m)) on a
// rows x cols cost matrix stored row-major. Every row is matched to a distinct
// column when rows <= cols, otherwise every column to a distinct row. Returns,
// per row, its column or kUnassigned.
std::vector<std::size_t> SolveAssignment(const std::vector<double>& cost, std::size_t rows,
                                         std::size_t cols);

}  // namespace eend

#endif  // EEND_ASSIGNMENT_HPP_

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

#ifndef EEND_OPTIM_HPP_
#define EEND_OPTIM_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "eend/tensor.hpp"

namespace eend {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// First and second moments, one buffer per parameter in registration order.
struct AdamWState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// One AdamW update with decoupled weight decay: w <- w - lr * wd * w, then the
// bias-corrected Adam step. Parameters without a gradient buffer are treated
// as having a zero gradient.
void adamw_step(std::span<Tensor> params, AdamWState& state, double lr,
                const AdamWOptions& options);

// Scales all gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

void zero_grads(std::span<Tensor> params);

// Rounds every value to the nearest fp32. Parameters are kept fp32-representable
// so that the fp32 checkpoint format round-trips them exactly.
void round_to_fp32(Tensor& t);
// Same for the optimizer moments, so a resumed run continues bit-exactly.
void round_to_fp32(AdamWState& state);

}  // namespace eend

#endif  // EEND_OPTIM_HPP_

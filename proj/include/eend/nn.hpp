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

#ifndef EEND_NN_HPP_
#define EEND_NN_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eend/tensor.hpp"
#include "eend/tensor_io.hpp"

namespace eend {

enum class Init { kZeros, kOnes, kXavier, kNormal };

/// Owns every trainable tensor of a model under a hierarchical name such as
/// "enc.2.attn.wq". Registration order is stable and defines the optimizer
/// state layout and the checkpoint order.
class ParameterStore {
 public:
  Tensor Create(const std::string& name, Shape shape, Init init, std::mt19937_64& rng);
  const Tensor& Get(const std::string& name) const;
  bool Contains(const std::string& name) const;
  // Drops every parameter whose name starts with `prefix`; returns how many.
  std::size_t EraseWithPrefix(const std::string& prefix);

  std::vector<Tensor> Tensors() const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t ParameterCount() const;

 private:
  std::vector<NamedTensor> entries_;
};

/// Per-forward settings. Dropout only runs in training mode and needs an rng.
struct RunContext {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor Dropout(const Tensor& x) const;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
         std::mt19937_64& rng, bool with_bias = true);
  Tensor Forward(const Tensor& x) const;

  Tensor weight;  // in x out
  Tensor bias;    // out, undefined when built without bias
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t dim,
            std::mt19937_64& rng);
  Tensor Forward(const Tensor& x) const;

  Tensor gamma;
  Tensor beta;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t dim,
                     std::size_t heads, std::mt19937_64& rng);

  // Scaled dot-product attention of `query` rows over `memory` rows. When
  // `weights` is non-null the per-head attention matrices are appended to it.
  Tensor Forward(const Tensor& query, const Tensor& memory, bool causal, const RunContext& ctx,
                 std::vector<Tensor>* weights = nullptr) const;

  std::size_t heads() const { return heads_; }

  Linear q, k, v, out;

 private:
  std::size_t heads_ = 1;
};

class FeedForward {
 public:
  enum class Activation { kRelu, kSwish };

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& prefix, std::size_t dim,
              std::size_t hidden, Activation activation, std::mt19937_64& rng);
  Tensor Forward(const Tensor& x, const RunContext& ctx) const;

  Linear up, down;

 private:
  Activation activation_ = Activation::kRelu;
};

// Fixed sinusoidal table, T x D. Only used when positional encoding is enabled.
Tensor SinusoidalPositions(std::size_t steps, std::size_t dim);

}  // namespace eend

#endif  // EEND_NN_HPP_

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

#ifndef EEND_ENCODER_HPP_
#define EEND_ENCODER_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eend/nn.hpp"

namespace eend {

enum class BlockKind { kTransformer, kConformer };

struct EncoderConfig {
  std::size_t input_dim = 345;
  std::size_t layers = 4;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  BlockKind block = BlockKind::kTransformer;
  std::size_t conv_kernel = 7;
  double dropout = 0.1;
  bool positional_encoding = false;

  void Validate() const;
};

class EncoderBlock {
 public:
  virtual ~EncoderBlock() = default;
  virtual Tensor Forward(const Tensor& x, const RunContext& ctx) const = 0;
};

/// Pre-norm self-attention + feed-forward, both residual, then an output
/// LayerNorm.
class TransformerBlock : public EncoderBlock {
 public:
  TransformerBlock(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg,
                   std::mt19937_64& rng);
  Tensor Forward(const Tensor& x, const RunContext& ctx) const override;
  // Same as Forward, also collecting per-head attention matrices.
  Tensor ForwardWithWeights(const Tensor& x, const RunContext& ctx,
                            std::vector<Tensor>* weights) const;

  LayerNorm attn_norm, ff_norm, final_norm;
  MultiHeadAttention attn;
  FeedForward ff;
};

/// Macaron conformer block:
///   x += 1/2 FFN(x); x += MHSA(x); x += Conv(x); x += 1/2 FFN(x); x = LN(x)
/// with Conv = pointwise(D->2D) -> GLU -> depthwise(k) -> swish -> pointwise.
class ConformerBlock : public EncoderBlock {
 public:
  ConformerBlock(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg,
                 std::mt19937_64& rng);
  Tensor Forward(const Tensor& x, const RunContext& ctx) const override;

  LayerNorm ff1_norm, attn_norm, conv_norm, ff2_norm, final_norm;
  FeedForward ff1, ff2;
  MultiHeadAttention attn;
  Linear pointwise_in, pointwise_out;
  Tensor depthwise_kernel;  // D x conv_kernel
};

// Maps (E_l, l) to the conditioned embeddings fed to layer l + 1.
using Conditioner = std::function<Tensor(const Tensor& embeddings, std::size_t layer)>;

/// Input projection followed by L blocks.
class EncoderStack {
 public:
  EncoderStack(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  // Linear + layer norm from features to model width (plus positions when
  // enabled).
  Tensor InputProjection(const Tensor& features) const;

  // Runs every block. The conditioner runs after layers 1..L-1; the output of
  // layer L is returned unconditioned. An empty conditioner is the identity.
  std::vector<Tensor> Encode(const Tensor& x0, const Conditioner& conditioner,
                             const RunContext& ctx) const;

  const EncoderConfig& config() const { return cfg_; }
  const EncoderBlock& block(std::size_t index) const { return *blocks_.at(index); }

 private:
  EncoderConfig cfg_;
  Linear input_linear_;
  LayerNorm input_norm_;
  std::vector<std::unique_ptr<EncoderBlock>> blocks_;
};

}  // namespace eend

#endif  // EEND_ENCODER_HPP_

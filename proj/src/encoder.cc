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

#include "eend/encoder.hpp"

#include <stdexcept>

namespace eend {

void EncoderConfig::Validate() const {
  if (layers == 0) throw std::invalid_argument("encoder needs at least one layer");
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("encoder dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (block == BlockKind::kConformer && conv_kernel % 2 == 0) {
    throw std::invalid_argument("conformer conv_kernel must be odd");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout out of [0, 1)");
}

TransformerBlock::TransformerBlock(ParameterStore& store, const std::string& prefix,
                                   const EncoderConfig& cfg, std::mt19937_64& rng)
    : attn_norm(store, prefix + ".attn_norm", cfg.dim, rng),
      ff_norm(store, prefix + ".ff_norm", cfg.dim, rng),
      final_norm(store, prefix + ".final_norm", cfg.dim, rng),
      attn(store, prefix + ".attn", cfg.dim, cfg.heads, rng),
      ff(store, prefix + ".ff", cfg.dim, cfg.ff_dim, FeedForward::Activation::kRelu, rng) {}

Tensor TransformerBlock::Forward(const Tensor& x, const RunContext& ctx) const {
  return ForwardWithWeights(x, ctx, nullptr);
}

Tensor TransformerBlock::ForwardWithWeights(const Tensor& x, const RunContext& ctx,
                                            std::vector<Tensor>* weights) const {
  const Tensor normed = attn_norm.Forward(x);
  Tensor h = add(x, ctx.Dropout(attn.Forward(normed, normed, false, ctx, weights)));
  h = add(h, ctx.Dropout(ff.Forward(ff_norm.Forward(h), ctx)));
  // Keeps every layer's output, and so the attractor logits, at unit scale
  // no matter how much the conditioning adds to the residual stream.
  return final_norm.Forward(h);
}

ConformerBlock::ConformerBlock(ParameterStore& store, const std::string& prefix,
                               const EncoderConfig& cfg, std::mt19937_64& rng)
    : ff1_norm(store, prefix + ".ff1_norm", cfg.dim, rng),
      attn_norm(store, prefix + ".attn_norm", cfg.dim, rng),
      conv_norm(store, prefix + ".conv_norm", cfg.dim, rng),
      ff2_norm(store, prefix + ".ff2_norm", cfg.dim, rng),
      final_norm(store, prefix + ".final_norm", cfg.dim, rng),
      ff1(store, prefix + ".ff1", cfg.dim, cfg.ff_dim, FeedForward::Activation::kSwish, rng),
      ff2(store, prefix + ".ff2", cfg.dim, cfg.ff_dim, FeedForward::Activation::kSwish, rng),
      attn(store, prefix + ".attn", cfg.dim, cfg.heads, rng),
      pointwise_in(store, prefix + ".conv.pw_in", cfg.dim, 2 * cfg.dim, rng),
      pointwise_out(store, prefix + ".conv.pw_out", cfg.dim, cfg.dim, rng) {
  depthwise_kernel =
      store.Create(prefix + ".conv.dw", {cfg.dim, cfg.conv_kernel}, Init::kXavier, rng);
}

Tensor ConformerBlock::Forward(const Tensor& x, const RunContext& ctx) const {
  Tensor h = add(x, scale(ctx.Dropout(ff1.Forward(ff1_norm.Forward(x), ctx)), 0.5));
  const Tensor normed = attn_norm.Forward(h);
  h = add(h, ctx.Dropout(attn.Forward(normed, normed, false, ctx)));
  Tensor conv = glu(pointwise_in.Forward(conv_norm.Forward(h)));
  conv = swish(depthwise_conv1d(conv, depthwise_kernel));
  h = add(h, ctx.Dropout(pointwise_out.Forward(conv)));
  h = add(h, scale(ctx.Dropout(ff2.Forward(ff2_norm.Forward(h), ctx)), 0.5));
  return final_norm.Forward(h);
}

EncoderStack::EncoderStack(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg),
      input_linear_(store, "in.linear", cfg.input_dim, cfg.dim, rng),
      input_norm_(store, "in.norm", cfg.dim, rng) {
  cfg_.Validate();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "enc." + std::to_string(l + 1);
    if (cfg.block == BlockKind::kTransformer) {
      blocks_.push_back(std::make_unique<TransformerBlock>(store, prefix, cfg, rng));
    } else {
      blocks_.push_back(std::make_unique<ConformerBlock>(store, prefix, cfg, rng));
    }
  }
}

Tensor EncoderStack::InputProjection(const Tensor& features) const {
  if (features.cols() != cfg_.input_dim) {
    throw DimensionError("encoder input expects " + std::to_string(cfg_.input_dim) +
                         " columns, got " + ShapeString(features.shape()));
  }
  Tensor x = input_norm_.Forward(input_linear_.Forward(features));
  if (cfg_.positional_encoding) x = add(x, SinusoidalPositions(x.rows(), cfg_.dim));
  return x;
}

std::vector<Tensor> EncoderStack::Encode(const Tensor& x0, const Conditioner& conditioner,
                                         const RunContext& ctx) const {
  std::vector<Tensor> layers;
  layers.reserve(blocks_.size());
  Tensor h = x0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    Tensor e = blocks_[l]->Forward(h, ctx);
    layers.push_back(e);
    const bool last = l + 1 == blocks_.size();
    h = (!last && conditioner) ? conditioner(e, l + 1) : e;
  }
  return layers;
}

}  // namespace eend

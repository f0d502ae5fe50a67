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

#ifndef EEND_ATTRACTORS_HPP_
#define EEND_ATTRACTORS_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eend/nn.hpp"

namespace eend {

/// Speaker attractors with one existence logit per slot (slots x 1).
struct SpeakerAttractorSet {
  Tensor attractors;
  Tensor existence_logits;

  std::size_t size() const { return attractors.rows(); }
  std::vector<double> ExistenceProbs() const;
  // The first `count` attractors, count x D.
  Tensor Leading(std::size_t count) const;
};

/// N x D attribute attractors; no existence head.
struct AttributeAttractorSet {
  Tensor attractors;
  std::size_t size() const { return attractors.rows(); }
};

/// Anything that decodes speaker attractors from a memory sequence.
class SpeakerEda {
 public:
  virtual ~SpeakerEda() = default;
  virtual SpeakerAttractorSet Decode(const Tensor& memory, std::size_t slots,
                                     const RunContext& ctx, std::uint64_t shuffle_seed) const = 0;
};

/// Classic EDA: an LSTM encoder reads the frames in a seeded random order, its
/// final state seeds an LSTM decoder fed zero vectors; each decoder step emits
/// one attractor. Since the decoder input is always zero, its input projection
/// reduces to the bias.
class LstmEda : public SpeakerEda {
 public:
  LstmEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
          std::mt19937_64& rng);
  SpeakerAttractorSet Decode(const Tensor& memory, std::size_t slots, const RunContext& ctx,
                             std::uint64_t shuffle_seed) const override;

  Tensor enc_w_ih, enc_w_hh, enc_bias;
  Tensor dec_w_hh, dec_bias;
  Linear existence;
};

/// One pre-norm decoder block over learned query slots: self-attention among
/// slots (causal or full), cross-attention to the memory, feed-forward. Frame
/// order of the memory does not matter.
class QueryDecoder {
 public:
  QueryDecoder(ParameterStore& store, const std::string& prefix, std::size_t dim,
               std::size_t heads, std::size_t ff_dim, std::size_t slots, bool causal,
               std::mt19937_64& rng);
  Tensor Forward(const Tensor& memory, std::size_t slots, const RunContext& ctx) const;

  std::size_t max_slots() const { return queries.rows(); }

  Tensor queries;  // max_slots x D, unit-variance random init
  LayerNorm self_norm, cross_norm, memory_norm, ff_norm;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;

 private:
  bool causal_;
};

/// Auto-regressive transformer EDA: causal query slots plus existence head.
class TransformerEda : public SpeakerEda {
 public:
  TransformerEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
                 std::size_t heads, std::size_t ff_dim, std::size_t max_slots,
                 std::mt19937_64& rng);
  SpeakerAttractorSet Decode(const Tensor& memory, std::size_t slots, const RunContext& ctx,
                             std::uint64_t shuffle_seed) const override;

  QueryDecoder decoder;
  Linear existence;
};

/// Non-autoregressive attribute EDA: N query slots with full self-attention.
class AttributeEda {
 public:
  AttributeEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
               std::size_t heads, std::size_t ff_dim, std::size_t count, std::mt19937_64& rng);
  AttributeAttractorSet Decode(const Tensor& memory, const RunContext& ctx) const;

  QueryDecoder decoder;
};

/// E + sigmoid(E A^T) A W: activity posteriors weight the attractors, then a
/// D x D projection.
class WeightedConditioning {
 public:
  WeightedConditioning(ParameterStore& store, const std::string& prefix, std::size_t dim,
                       std::mt19937_64& rng);
  Tensor Apply(const Tensor& embeddings, const Tensor& attractors) const;

  Tensor projection;
};

/// E + MHA(E, A): frames query the attractors.
class CrossAttentionConditioning {
 public:
  CrossAttentionConditioning(ParameterStore& store, const std::string& prefix, std::size_t dim,
                             std::size_t heads, std::mt19937_64& rng);
  Tensor Apply(const Tensor& embeddings, const Tensor& attractors, const RunContext& ctx,
               std::vector<Tensor>* weights = nullptr) const;

  MultiHeadAttention attention;
};

// Length of the leading run of probabilities >= threshold.
std::size_t count_speakers(std::span<const double> existence_probs, double threshold = 0.5);

// sigmoid(A E^T) for the first `speakers` attractors: speakers x T.
Tensor SpeakerPosteriors(const SpeakerAttractorSet& attractors, const Tensor& embeddings,
                         std::size_t speakers);

}  // namespace eend

#endif  // EEND_ATTRACTORS_HPP_

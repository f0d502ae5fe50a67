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

#include "eend/attractors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eend/rng.hpp"

namespace eend {

std::vector<double> SpeakerAttractorSet::ExistenceProbs() const {
  std::vector<double> probs;
  probs.reserve(existence_logits.numel());
  for (double z : existence_logits.values()) {
    probs.push_back(z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)));
  }
  return probs;
}

Tensor SpeakerAttractorSet::Leading(std::size_t count) const {
  if (count == attractors.rows()) return attractors;
  return slice_rows(attractors, 0, count);
}

LstmEda::LstmEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
                 std::mt19937_64& rng) {
  enc_w_ih = store.Create(prefix + ".enc.w_ih", {dim, 4 * dim}, Init::kXavier, rng);
  enc_w_hh = store.Create(prefix + ".enc.w_hh", {dim, 4 * dim}, Init::kXavier, rng);
  enc_bias = store.Create(prefix + ".enc.b", {4 * dim}, Init::kZeros, rng);
  dec_w_hh = store.Create(prefix + ".dec.w_hh", {dim, 4 * dim}, Init::kXavier, rng);
  dec_bias = store.Create(prefix + ".dec.b", {4 * dim}, Init::kZeros, rng);
  existence = Linear(store, prefix + ".exist", dim, 1, rng);
}

SpeakerAttractorSet LstmEda::Decode(const Tensor& memory, std::size_t slots,
                                    const RunContext& ctx, std::uint64_t shuffle_seed) const {
  (void)ctx;
  const std::size_t dim = enc_w_hh.rows();
  if (memory.cols() != dim) {
    throw DimensionError("LstmEda: memory " + ShapeString(memory.shape()) + " vs dim " +
                         std::to_string(dim));
  }
  std::vector<std::size_t> order(memory.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = MakeRng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const Tensor gates = add_row(matmul(gather_rows(memory, order), enc_w_ih), enc_bias);
  Tensor state = Tensor::Zeros({1, 2 * dim});
  for (std::size_t t = 0; t < order.size(); ++t) {
    state = lstm_cell(slice_rows(gates, t, 1), state, enc_w_hh);
  }
  std::vector<Tensor> outputs;
  outputs.reserve(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    state = lstm_cell(dec_bias, state, dec_w_hh);
    outputs.push_back(slice_cols(state, 0, dim));
  }
  SpeakerAttractorSet out;
  out.attractors = slots == 0 ? Tensor::Zeros({0, dim}) : concat_rows(outputs);
  out.existence_logits = existence.Forward(out.attractors);
  return out;
}

QueryDecoder::QueryDecoder(ParameterStore& store, const std::string& prefix, std::size_t dim,
                           std::size_t heads, std::size_t ff_dim, std::size_t slots, bool causal,
                           std::mt19937_64& rng)
    : self_norm(store, prefix + ".self_norm", dim, rng),
      cross_norm(store, prefix + ".cross_norm", dim, rng),
      memory_norm(store, prefix + ".memory_norm", dim, rng),
      ff_norm(store, prefix + ".ff_norm", dim, rng),
      self_attn(store, prefix + ".self_attn", dim, heads, rng),
      cross_attn(store, prefix + ".cross_attn", dim, heads, rng),
      ff(store, prefix + ".ff", dim, ff_dim, FeedForward::Activation::kRelu, rng),
      causal_(causal) {
  queries = store.Create(prefix + ".queries", {slots, dim}, Init::kNormal, rng);
}

Tensor QueryDecoder::Forward(const Tensor& memory, std::size_t slots,
                             const RunContext& ctx) const {
  if (slots > queries.rows()) {
    throw DimensionError("QueryDecoder: " + std::to_string(slots) + " slots requested, table has " +
                         std::to_string(queries.rows()));
  }
  Tensor x = slots == queries.rows() ? queries : slice_rows(queries, 0, slots);
  if (slots == 0) return x;
  const Tensor normed = self_norm.Forward(x);
  x = add(x, self_attn.Forward(normed, normed, causal_, ctx));
  x = add(x, cross_attn.Forward(cross_norm.Forward(x), memory_norm.Forward(memory), false, ctx));
  return add(x, ff.Forward(ff_norm.Forward(x), ctx));
}

TransformerEda::TransformerEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
                               std::size_t heads, std::size_t ff_dim, std::size_t max_slots,
                               std::mt19937_64& rng)
    : decoder(store, prefix + ".dec", dim, heads, ff_dim, max_slots, /*causal=*/true, rng),
      existence(store, prefix + ".exist", dim, 1, rng) {}

SpeakerAttractorSet TransformerEda::Decode(const Tensor& memory, std::size_t slots,
                                           const RunContext& ctx, std::uint64_t) const {
  SpeakerAttractorSet out;
  out.attractors = decoder.Forward(memory, slots, ctx);
  out.existence_logits = existence.Forward(out.attractors);
  return out;
}

AttributeEda::AttributeEda(ParameterStore& store, const std::string& prefix, std::size_t dim,
                           std::size_t heads, std::size_t ff_dim, std::size_t count,
                           std::mt19937_64& rng)
    : decoder(store, prefix + ".dec", dim, heads, ff_dim, count, /*causal=*/false, rng) {}

AttributeAttractorSet AttributeEda::Decode(const Tensor& memory, const RunContext& ctx) const {
  return {decoder.Forward(memory, decoder.max_slots(), ctx)};
}

WeightedConditioning::WeightedConditioning(ParameterStore& store, const std::string& prefix,
                                           std::size_t dim, std::mt19937_64& rng) {
  projection = store.Create(prefix + ".w", {dim, dim}, Init::kXavier, rng);
}

Tensor WeightedConditioning::Apply(const Tensor& embeddings, const Tensor& attractors) const {
  if (attractors.rows() == 0) return embeddings;
  const Tensor weights = sigmoid(matmul_nt(embeddings, attractors));  // T x S
  return add(embeddings, matmul(matmul(weights, attractors), projection));
}

CrossAttentionConditioning::CrossAttentionConditioning(ParameterStore& store,
                                                       const std::string& prefix, std::size_t dim,
                                                       std::size_t heads, std::mt19937_64& rng)
    : attention(store, prefix + ".mha", dim, heads, rng) {}

Tensor CrossAttentionConditioning::Apply(const Tensor& embeddings, const Tensor& attractors,
                                         const RunContext& ctx,
                                         std::vector<Tensor>* weights) const {
  if (attractors.rows() == 0) return embeddings;
  return add(embeddings, attention.Forward(embeddings, attractors, false, ctx, weights));
}

std::size_t count_speakers(std::span<const double> existence_probs, double threshold) {
  std::size_t n = 0;
  while (n < existence_probs.size() && existence_probs[n] >= threshold) ++n;
  return n;
}

Tensor SpeakerPosteriors(const SpeakerAttractorSet& attractors, const Tensor& embeddings,
                         std::size_t speakers) {
  if (speakers > attractors.size()) {
    throw DimensionError("SpeakerPosteriors: " + std::to_string(speakers) +
                         " speakers requested from " + std::to_string(attractors.size()) +
                         " attractors");
  }
  return sigmoid(matmul_nt(attractors.Leading(speakers), embeddings));
}

}  // namespace eend

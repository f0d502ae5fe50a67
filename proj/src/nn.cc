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

#include "eend/nn.hpp"

#include <algorithm>
#include <cmath>

#include "eend/optim.hpp"

namespace eend {

Tensor ParameterStore::Create(const std::string& name, Shape shape, Init init,
                              std::mt19937_64& rng) {
  if (Contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  Tensor t = Tensor::Zeros(shape, /*requires_grad=*/true);
  auto values = t.mutable_values();
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::kXavier: {
      const double fan_in = static_cast<double>(shape[0]);
      const double fan_out = static_cast<double>(shape.size() >= 2 ? t.cols() : 1);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : values) v = dist(rng);
      break;
    }
    case Init::kNormal: {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (double& v : values) v = dist(rng);
      break;
    }
  }
  round_to_fp32(t);
  entries_.push_back({name, t});
  return t;
}

const Tensor& ParameterStore::Get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("no parameter named " + name);
}

bool ParameterStore::Contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const NamedTensor& e) { return e.name == name; });
}

std::size_t ParameterStore::EraseWithPrefix(const std::string& prefix) {
  const auto before = entries_.size();
  std::erase_if(entries_, [&](const NamedTensor& e) { return e.name.starts_with(prefix); });
  return before - entries_.size();
}

std::vector<Tensor> ParameterStore::Tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParameterStore::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

Tensor RunContext::Dropout(const Tensor& x) const {
  if (!training || dropout <= 0.0 || rng == nullptr) return x;
  return eend::dropout(x, dropout, *rng);
}

Linear::Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool with_bias) {
  weight = store.Create(prefix + ".w", {in, out}, Init::kXavier, rng);
  if (with_bias) bias = store.Create(prefix + ".b", {out}, Init::kZeros, rng);
}

Tensor Linear::Forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t dim,
                     std::mt19937_64& rng) {
  gamma = store.Create(prefix + ".gamma", {dim}, Init::kOnes, rng);
  beta = store.Create(prefix + ".beta", {dim}, Init::kZeros, rng);
}

Tensor LayerNorm::Forward(const Tensor& x) const { return layer_norm(x, gamma, beta, kLayerNormEps); }

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& prefix,
                                       std::size_t dim, std::size_t heads, std::mt19937_64& rng)
    : q(store, prefix + ".q", dim, dim, rng),
      k(store, prefix + ".k", dim, dim, rng),
      v(store, prefix + ".v", dim, dim, rng),
      out(store, prefix + ".out", dim, dim, rng),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
}

Tensor MultiHeadAttention::Forward(const Tensor& query, const Tensor& memory, bool causal,
                                   const RunContext& ctx, std::vector<Tensor>* weights) const {
  if (query.cols() != memory.cols()) {
    throw DimensionError("attention: query " + ShapeString(query.shape()) + " vs memory " +
                         ShapeString(memory.shape()));
  }
  const Tensor qp = q.Forward(query);
  const Tensor kp = k.Forward(memory);
  const Tensor vp = v.Forward(memory);
  const bool drop = ctx.training && ctx.dropout > 0.0 && ctx.rng != nullptr;
  const Tensor merged = multi_head_attention(qp, kp, vp, heads_, causal, drop ? ctx.dropout : 0.0,
                                             drop ? ctx.rng : nullptr, weights);
  return out.Forward(merged);
}

FeedForward::FeedForward(ParameterStore& store, const std::string& prefix, std::size_t dim,
                         std::size_t hidden, Activation activation, std::mt19937_64& rng)
    : up(store, prefix + ".up", dim, hidden, rng),
      down(store, prefix + ".down", hidden, dim, rng),
      activation_(activation) {}

Tensor FeedForward::Forward(const Tensor& x, const RunContext& ctx) const {
  Tensor h = up.Forward(x);
  h = activation_ == Activation::kRelu ? relu(h) : swish(h);
  return down.Forward(ctx.Dropout(h));
}

Tensor SinusoidalPositions(std::size_t steps, std::size_t dim) {
  std::vector<double> values(steps * dim);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      values[t * dim + i] = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return Tensor::FromValues({steps, dim}, std::move(values));
}

}  // namespace eend

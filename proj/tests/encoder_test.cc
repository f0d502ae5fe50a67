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

#include <cmath>
#include <numeric>

#include "eend/encoder.hpp"
#include "eend/rng.hpp"
#include "support/grad_suite.hpp"

using namespace eend;
using namespace eend::testing;

namespace {

EncoderConfig Config(std::size_t dim, BlockKind block, std::size_t layers = 2) {
  EncoderConfig cfg;
  cfg.input_dim = 11;
  cfg.layers = layers;
  cfg.dim = dim;
  cfg.heads = 4;
  cfg.ff_dim = 2 * dim;
  cfg.block = block;
  cfg.conv_kernel = 3;
  cfg.dropout = 0.0;
  return cfg;
}

std::vector<std::size_t> RandomPermutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

double MaxPermutedDeviation(const EncoderBlock& block, std::size_t frames, std::size_t dim,
                            std::mt19937_64& rng) {
  const Tensor x = RandomTensor({frames, dim}, rng, 1.0, false);
  const auto perm = RandomPermutation(frames, rng);
  const RunContext ctx;
  const Tensor y = block.Forward(x, ctx);
  const Tensor yp = block.Forward(gather_rows(x, perm), ctx);
  const Tensor expect = gather_rows(y, perm);
  double worst = 0.0;
  for (std::size_t i = 0; i < yp.numel(); ++i) {
    worst = std::max(worst, std::abs(yp.values()[i] - expect.values()[i]));
  }
  return worst;
}

void ZeroParam(Tensor t) {
  for (double& v : t.mutable_values()) v = 0.0;
}

}  // namespace

TEST_CASE("input projection of zero features is the norm offset on every row") {
  auto rng = MakeRng(1);
  ParameterStore store;
  EncoderStack enc(store, Config(16, BlockKind::kTransformer), rng);
  Tensor beta = store.Get("in.norm.beta");
  for (double& v : beta.mutable_values()) v = std::normal_distribution<double>()(rng);
  const Tensor y = enc.InputProjection(Tensor::Zeros({5, 11}));
  CHECK(y.shape() == Shape{5, 16});
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t d = 0; d < 16; ++d) CHECK(y.at(t, d) == beta.values()[d]);
  }
  CHECK(enc.InputProjection(Tensor::Zeros({1, 11})).shape() == Shape{1, 16});
  CHECK_THROWS_AS(enc.InputProjection(Tensor::Zeros({3, 10})), DimensionError);
}

TEST_CASE("blocks preserve shape") {
  for (BlockKind kind : {BlockKind::kTransformer, BlockKind::kConformer}) {
    for (auto [t, d] : {std::pair<std::size_t, std::size_t>{7, 16}, {50, 64}}) {
      auto rng = MakeRng(2);
      ParameterStore store;
      const EncoderConfig cfg = Config(d, kind);
      std::unique_ptr<EncoderBlock> b;
      if (kind == BlockKind::kTransformer) {
        b = std::make_unique<TransformerBlock>(store, "b", cfg, rng);
      } else {
        b = std::make_unique<ConformerBlock>(store, "b", cfg, rng);
      }
      const Tensor y = b->Forward(RandomTensor({t, d}, rng, 1.0, false), RunContext{});
      CHECK(y.shape() == Shape{t, d});
    }
  }
}

TEST_CASE("transformer block is frame-permutation equivariant, conformer is not") {
  auto rng = MakeRng(3);
  for (int trial = 0; trial < 5; ++trial) {
    ParameterStore store;
    const EncoderConfig tcfg = Config(16, BlockKind::kTransformer);
    const EncoderConfig ccfg = Config(16, BlockKind::kConformer);
    TransformerBlock tb(store, "t", tcfg, rng);
    ConformerBlock cb(store, "c", ccfg, rng);
    CHECK(MaxPermutedDeviation(tb, 12, 16, rng) <= kInvarianceTol);
    CHECK(MaxPermutedDeviation(cb, 12, 16, rng) > kConformerBreakMin);
  }
}

TEST_CASE("transformer attention rows sum to one") {
  auto rng = MakeRng(4);
  ParameterStore store;
  const EncoderConfig cfg = Config(16, BlockKind::kTransformer);
  TransformerBlock tb(store, "t", cfg, rng);
  std::vector<Tensor> weights;
  tb.ForwardWithWeights(RandomTensor({9, 16}, rng, 1.0, false), RunContext{}, &weights);
  REQUIRE(weights.size() == cfg.heads);
  for (const Tensor& w : weights) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < w.cols(); ++c) total += w.at(r, c);
      CHECK(std::abs(total - 1.0) < kTightTol);
    }
  }
}

TEST_CASE("conformer with silenced sublayers reduces to its final norm") {
  auto rng = MakeRng(5);
  ParameterStore store;
  const EncoderConfig cfg = Config(8, BlockKind::kConformer);
  ConformerBlock cb(store, "c", cfg, rng);
  for (Linear* l : {&cb.ff1.down, &cb.ff2.down, &cb.attn.out, &cb.pointwise_out}) {
    ZeroParam(l->weight);
    ZeroParam(l->bias);
  }
  Tensor k = cb.depthwise_kernel;
  for (std::size_t c = 0; c < cfg.dim; ++c) {
    for (std::size_t j = 0; j < cfg.conv_kernel; ++j) {
      k.at(c, j) = j == cfg.conv_kernel / 2 ? 1.0 : 0.0;
    }
  }
  const Tensor x = RandomTensor({6, 8}, rng, 1.0, false);
  const Tensor y = cb.Forward(x, RunContext{});
  const Tensor expect = layer_norm(x, cb.final_norm.gamma, cb.final_norm.beta);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    CHECK(std::abs(y.values()[i] - expect.values()[i]) < kTightTol);
  }
}

TEST_CASE("encode returns every layer and calls the hook between layers") {
  auto rng = MakeRng(6);
  ParameterStore store;
  const EncoderConfig cfg = Config(16, BlockKind::kTransformer, 4);
  EncoderStack enc(store, cfg, rng);
  const Tensor x0 = RandomTensor({7, 16}, rng, 1.0, false);
  std::vector<std::size_t> calls;
  const Conditioner hook = [&](const Tensor& e, std::size_t layer) {
    calls.push_back(layer);
    return e;
  };
  const auto layers = enc.Encode(x0, hook, RunContext{});
  CHECK(layers.size() == 4);
  CHECK(calls == std::vector<std::size_t>{1, 2, 3});
  for (const Tensor& e : layers) CHECK(e.shape() == Shape{7, 16});

  const auto again = enc.Encode(x0, hook, RunContext{});
  for (std::size_t l = 0; l < 4; ++l) {
    for (std::size_t i = 0; i < layers[l].numel(); ++i) {
      CHECK(layers[l].values()[i] == again[l].values()[i]);
    }
  }
}

TEST_CASE("identity hook with one layer is a single block") {
  auto rng = MakeRng(7);
  ParameterStore store;
  const EncoderConfig cfg = Config(16, BlockKind::kConformer, 1);
  EncoderStack enc(store, cfg, rng);
  const Tensor x0 = RandomTensor({5, 16}, rng, 1.0, false);
  const auto layers = enc.Encode(x0, nullptr, RunContext{});
  REQUIRE(layers.size() == 1);
  const Tensor direct = enc.block(0).Forward(x0, RunContext{});
  for (std::size_t i = 0; i < direct.numel(); ++i) {
    CHECK(layers[0].values()[i] == direct.values()[i]);
  }
}

TEST_CASE("gradient reaches the encoder input from the last layer") {
  auto rng = MakeRng(8);
  ParameterStore store;
  EncoderStack enc(store, Config(16, BlockKind::kConformer, 3), rng);
  Tensor x0 = RandomTensor({6, 16}, rng);
  Tape tape;
  tape.Backward(Project(enc.Encode(x0, nullptr, RunContext{}).back(), 9));
  double norm = 0.0;
  for (double g : x0.grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("dropout in training mode changes outputs, inference does not") {
  auto rng = MakeRng(9);
  ParameterStore store;
  EncoderConfig cfg = Config(16, BlockKind::kTransformer);
  cfg.dropout = 0.3;
  TransformerBlock tb(store, "t", cfg, rng);
  const Tensor x = RandomTensor({6, 16}, rng, 1.0, false);
  auto drop_rng = MakeRng(10);
  const RunContext train{true, 0.3, &drop_rng};
  const Tensor a = tb.Forward(x, RunContext{});
  const Tensor b = tb.Forward(x, train);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.values()[i] - b.values()[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("config validation") {
  EncoderConfig cfg = Config(16, BlockKind::kConformer);
  cfg.heads = 3;
  CHECK_THROWS(cfg.Validate());
  cfg = Config(16, BlockKind::kConformer);
  cfg.conv_kernel = 4;
  CHECK_THROWS(cfg.Validate());
}

TEST_CASE("gradient suite: encoder blocks") {
  for (const GradCase& c : GradientCases()) {
    if (c.group != GradGroup::kBlock) continue;
    const GradReport r = RunGradCase(c, 2024, 10);
    INFO(c.name << ": " << r.worst);
    CHECK(r.max_rel_error < kGradRelTol);
  }
}

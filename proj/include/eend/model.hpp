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

#ifndef EEND_MODEL_HPP_
#define EEND_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eend/attractors.hpp"
#include "eend/encoder.hpp"

namespace eend {

enum class EdaKind { kLstm, kTransformer, kAttribute };
enum class ConditioningMode { kNone, kWeighted, kCrossAttention };

/// Architecture of one row of the results table:
///   1 EEND-EDA, 2 EEND-EDA-deep (shared intermediate EDA), 3 attribute
///   attractors, 4 = 3 + conformer, 5 = 2 with untied EDAs, 6 = 5 with
///   cross-attention conditioning, 7 = 6 with a transformer EDA.
struct VariantSpec {
  int id = 1;
  std::string name;
  BlockKind block = BlockKind::kTransformer;
  EdaKind eda = EdaKind::kLstm;
  ConditioningMode conditioning = ConditioningMode::kNone;
  bool shared = false;

  bool has_intermediate() const { return conditioning != ConditioningMode::kNone; }
};

VariantSpec DescribeVariant(int id);
inline constexpr int kNumVariants = 7;

struct ModelConfig {
  int variant = 1;
  EncoderConfig encoder;
  std::size_t attributes = 8;      // N
  std::size_t max_attractors = 8;  // decode cap and query table size
  std::uint64_t init_seed = 0;
};

struct ForwardOptions {
  enum class Mode { kTrain, kInfer };
  Mode mode = Mode::kInfer;
  // Training: true speaker count; S + 1 attractor slots are decoded.
  std::size_t num_speakers = 0;
  // Inference: also compute intermediate-layer posteriors.
  bool per_layer = false;
  double threshold = 0.5;
  std::uint64_t shuffle_seed = 0;
};

struct LayerPrediction {
  std::size_t layer = 0;  // 1-based encoder layer
  SpeakerAttractorSet attractors;
  Tensor posteriors;      // speakers x T
  std::size_t speakers = 0;
};

struct ModelOutput {
  std::vector<Tensor> embeddings;  // E_1..E_L
  SpeakerAttractorSet attractors;  // final EDA
  Tensor posteriors;               // speakers x T
  std::size_t speakers = 0;
  std::vector<LayerPrediction> intermediate;  // layers 1..L-1, when computed
  std::vector<AttributeAttractorSet> attributes;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  ModelOutput Forward(const Tensor& features, const ForwardOptions& options,
                      const RunContext& ctx) const;

  // Drops the intermediate speaker heads of attribute-attractor variants; they
  // do not feed the final prediction. Returns false (no-op) for other variants.
  bool PruneForInference();

  const ModelConfig& config() const { return config_; }
  const VariantSpec& variant() const { return spec_; }
  bool pruned() const { return pruned_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  std::size_t ParameterCount() const { return store_.ParameterCount(); }
  const EncoderStack& encoder() const { return *encoder_; }

 private:
  SpeakerAttractorSet DecodeSpeakers(std::size_t layer, const Tensor& memory, std::size_t slots,
                                     const RunContext& ctx, std::uint64_t seed) const;

  ModelConfig config_;
  VariantSpec spec_;
  ParameterStore store_;
  std::unique_ptr<EncoderStack> encoder_;
  // Index l - 1 holds layer l. Shared variants alias one object.
  std::vector<std::shared_ptr<SpeakerEda>> speaker_edas_;
  std::vector<std::unique_ptr<AttributeEda>> attribute_edas_;
  std::vector<std::shared_ptr<WeightedConditioning>> weighted_;
  std::vector<std::shared_ptr<CrossAttentionConditioning>> cross_;
  bool pruned_ = false;
};

}  // namespace eend

#endif  // EEND_MODEL_HPP_

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

#include "eend/model.hpp"

#include <stdexcept>

#include "eend/rng.hpp"

namespace eend {

VariantSpec DescribeVariant(int id) {
  VariantSpec s;
  s.id = id;
  switch (id) {
    case 1:
      s.name = "EEND-EDA";
      break;
    case 2:
      s.name = "EEND-EDA-deep";
      s.conditioning = ConditioningMode::kWeighted;
      s.shared = true;
      break;
    case 3:
      s.name = "Attribute attractors";
      s.eda = EdaKind::kAttribute;
      s.conditioning = ConditioningMode::kCrossAttention;
      break;
    case 4:
      s.name = "Attribute attractors + Conformer";
      s.block = BlockKind::kConformer;
      s.eda = EdaKind::kAttribute;
      s.conditioning = ConditioningMode::kCrossAttention;
      break;
    case 5:
      s.name = "2 + Non-shared EDA";
      s.conditioning = ConditioningMode::kWeighted;
      break;
    case 6:
      s.name = "5 + Cross attention";
      s.conditioning = ConditioningMode::kCrossAttention;
      break;
    case 7:
      s.name = "6 + TransformerEDA";
      s.eda = EdaKind::kTransformer;
      s.conditioning = ConditioningMode::kCrossAttention;
      break;
    default:
      throw std::invalid_argument("variant id must be in 1..7, got " + std::to_string(id));
  }
  return s;
}

Model::Model(const ModelConfig& config) : config_(config), spec_(DescribeVariant(config.variant)) {
  config_.encoder.block = spec_.block;
  if (config_.max_attractors == 0) throw std::invalid_argument("max_attractors must be >= 1");
  if (spec_.eda == EdaKind::kAttribute && config_.attributes == 0) {
    throw std::invalid_argument("attribute count N must be >= 1");
  }
  auto rng = MakeRng(DeriveSeed(config_.init_seed, "init"));
  encoder_ = std::make_unique<EncoderStack>(store_, config_.encoder, rng);

  const EncoderConfig& enc = config_.encoder;
  const std::size_t layers = enc.layers;
  // Speaker EDA per layer that needs one: all layers with intermediate heads,
  // only the last otherwise.
  auto make_speaker_eda = [&](const std::string& prefix) -> std::shared_ptr<SpeakerEda> {
    if (spec_.eda == EdaKind::kLstm) return std::make_shared<LstmEda>(store_, prefix, enc.dim, rng);
    return std::make_shared<TransformerEda>(store_, prefix, enc.dim, enc.heads, enc.ff_dim,
                                            config_.max_attractors, rng);
  };
  speaker_edas_.resize(layers);
  if (spec_.eda == EdaKind::kAttribute) {
    for (std::size_t l = 1; l <= layers; ++l) {
      const std::string prefix = "eda." + std::to_string(l);
      attribute_edas_.push_back(std::make_unique<AttributeEda>(
          store_, prefix + ".attr", enc.dim, enc.heads, enc.ff_dim, config_.attributes, rng));
      speaker_edas_[l - 1] = make_speaker_eda(prefix + ".spk");
    }
  } else if (spec_.shared) {
    auto shared = make_speaker_eda("eda.shared.spk");
    for (auto& e : speaker_edas_) e = shared;
  } else if (spec_.has_intermediate()) {
    for (std::size_t l = 1; l <= layers; ++l) {
      speaker_edas_[l - 1] = make_speaker_eda("eda." + std::to_string(l) + ".spk");
    }
  } else {
    speaker_edas_[layers - 1] = make_speaker_eda("eda." + std::to_string(layers) + ".spk");
  }

  if (spec_.conditioning == ConditioningMode::kWeighted) {
    weighted_.resize(layers - 1);
    if (spec_.shared && layers > 1) {
      auto shared = std::make_shared<WeightedConditioning>(store_, "cond.shared", enc.dim, rng);
      for (auto& c : weighted_) c = shared;
    } else {
      for (std::size_t l = 1; l < layers; ++l) {
        weighted_[l - 1] =
            std::make_shared<WeightedConditioning>(store_, "cond." + std::to_string(l), enc.dim, rng);
      }
    }
  } else if (spec_.conditioning == ConditioningMode::kCrossAttention) {
    for (std::size_t l = 1; l < layers; ++l) {
      cross_.push_back(std::make_shared<CrossAttentionConditioning>(
          store_, "cond." + std::to_string(l), enc.dim, enc.heads, rng));
    }
  }
}

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

bool Model::PruneForInference() {
  if (spec_.eda != EdaKind::kAttribute || pruned_) return false;
  const std::size_t layers = config_.encoder.layers;
  for (std::size_t l = 1; l < layers; ++l) {
    speaker_edas_[l - 1].reset();
    store_.EraseWithPrefix("eda." + std::to_string(l) + ".spk.");
  }
  pruned_ = true;
  return true;
}

SpeakerAttractorSet Model::DecodeSpeakers(std::size_t layer, const Tensor& memory,
                                          std::size_t slots, const RunContext& ctx,
                                          std::uint64_t seed) const {
  return speaker_edas_[layer - 1]->Decode(memory, slots, ctx, DeriveSeed(seed, layer));
}

ModelOutput Model::Forward(const Tensor& features, const ForwardOptions& options,
                           const RunContext& ctx) const {
  if (features.rows() == 0 || features.numel() == 0) {
    throw std::invalid_argument("diarization input has no frames");
  }
  const bool train = options.mode == ForwardOptions::Mode::kTrain;
  if (train && pruned_) throw std::logic_error("cannot train a pruned model");
  if (!train && options.per_layer && pruned_ && spec_.has_intermediate()) {
    throw std::logic_error("per-layer posteriors need the unpruned model");
  }
  const std::size_t slots = train ? options.num_speakers + 1 : config_.max_attractors;
  const bool attribute = spec_.eda == EdaKind::kAttribute;

  ModelOutput out;
  auto speakers_of = [&](const SpeakerAttractorSet& set) {
    return train ? options.num_speakers
                 : count_speakers(set.ExistenceProbs(), options.threshold);
  };

  Conditioner hook;
  if (spec_.has_intermediate()) {
    hook = [&](const Tensor& e, std::size_t l) -> Tensor {
      Tensor speaker_memory = e;
      Tensor attribute_memory;
      if (attribute) {
        AttributeAttractorSet aa = attribute_edas_[l - 1]->Decode(e, ctx);
        attribute_memory = aa.attractors;
        speaker_memory = aa.attractors;
        out.attributes.push_back(aa);
      }
      std::optional<SpeakerAttractorSet> spk;
      std::size_t count = 0;
      if (speaker_edas_[l - 1] && (!attribute || train || options.per_layer)) {
        spk = DecodeSpeakers(l, speaker_memory, slots, ctx, options.shuffle_seed);
        count = speakers_of(*spk);
        if (train || options.per_layer) {
          out.intermediate.push_back({l, *spk, SpeakerPosteriors(*spk, e, count), count});
        }
      }
      switch (spec_.conditioning) {
        case ConditioningMode::kWeighted:
          return weighted_[l - 1]->Apply(e, spk->Leading(count));
        case ConditioningMode::kCrossAttention:
          if (attribute) return cross_[l - 1]->Apply(e, attribute_memory, ctx);
          return cross_[l - 1]->Apply(e, spk->Leading(count), ctx);
        case ConditioningMode::kNone:
          break;
      }
      return e;
    };
  }

  out.embeddings = encoder_->Encode(encoder_->InputProjection(features), hook, ctx);
  const std::size_t last = config_.encoder.layers;
  const Tensor& final_embeddings = out.embeddings.back();
  Tensor memory = final_embeddings;
  if (attribute) {
    AttributeAttractorSet aa = attribute_edas_[last - 1]->Decode(final_embeddings, ctx);
    memory = aa.attractors;
    out.attributes.push_back(aa);
  }
  out.attractors = DecodeSpeakers(last, memory, slots, ctx, options.shuffle_seed);
  out.speakers = speakers_of(out.attractors);
  out.posteriors = SpeakerPosteriors(out.attractors, final_embeddings, out.speakers);
  return out;
}

}  // namespace eend

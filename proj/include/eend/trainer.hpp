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

#ifndef EEND_TRAINER_HPP_
#define EEND_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eend/config.hpp"
#include "eend/datagen.hpp"
#include "eend/features.hpp"
#include "eend/losses.hpp"
#include "eend/model.hpp"
#include "eend/optim.hpp"

namespace eend {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VariantMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int variant = 1;
  std::size_t batch_size = 8;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 2000;
  double grad_clip = 5.0;
  std::size_t chunk_frames = 500;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  double alpha = 1.0;
  double beta = 1.0;
  // Model shape.
  std::size_t layers = 4;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t conv_kernel = 7;
  std::size_t attributes = 8;
  std::size_t max_attractors = 8;
  double dropout = 0.1;
  bool positional_encoding = false;
  // Randomly permutes and sign-flips feature dimensions of every training
  // chunk. Only meaningful for isotropic synthetic voiceprint features.
  bool augment_dims = false;
  // Validation DER post-processing.
  double threshold = 0.5;
  std::size_t median_window = 11;

  static TrainConfig FromKeyValue(KeyValueConfig& kv);
  std::string ToKeyValue() const;
  void Validate() const;
  ModelConfig MakeModelConfig(std::size_t input_dim) const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> valid_loss;
  std::optional<double> valid_der;
  std::size_t steps = 0;  // optimizer steps taken in this epoch

  std::string ToJson() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_valid_loss = 0.0;
  std::size_t best_epoch = 0;
  double final_valid_loss = 0.0;
  std::int64_t total_steps = 0;
};

/// Everything a checkpoint carries besides the parameters.
struct Checkpoint {
  Model model;
  FeatureNorm norm;
  std::size_t epoch = 0;
  AdamWState optimizer;
  double best_valid_loss = 0.0;
};

void SaveCheckpoint(const std::filesystem::path& path, const Model& model, const FeatureNorm& norm,
                    std::size_t epoch, const AdamWState* optimizer = nullptr,
                    double best_valid_loss = 0.0);
// Throws VariantMismatchError when expected_variant is set and differs.
Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          std::optional<int> expected_variant = std::nullopt);

struct TrainOptions {
  std::filesystem::path corpus;
  std::filesystem::path out;  // best.ckpt, final.ckpt, train.log
  std::optional<std::filesystem::path> resume;
  std::function<void(const EpochLog&)> on_epoch;
};

// Loss of one recording with the given options; used by training and
// validation so both see the same objective.
LossBreakdown RecordingLoss(const Model& model, const Tensor& features,
                            const ActivityMatrix& labels, const LossWeights& weights,
                            const RunContext& ctx, std::uint64_t shuffle_seed);

TrainResult train(const TrainConfig& cfg, const TrainOptions& options);

// Corpus-level DER of a model on recordings, after binarization.
double EvaluateDer(const Model& model, const std::vector<Recording>& recordings,
                   const FeatureNorm& norm, double threshold, std::size_t median_window);

}  // namespace eend

#endif  // EEND_TRAINER_HPP_

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

#ifndef EEND_DATAGEN_HPP_
#define EEND_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "eend/activity.hpp"
#include "eend/config.hpp"
#include "eend/features.hpp"

namespace eend {

/// Ground-truth speaker activity of one synthetic recording.
struct ActivityScript {
  ActivityMatrix activity;
  std::uint64_t seed = 0;

  std::size_t speakers() const { return activity.speakers(); }
  std::size_t frames() const { return activity.frames(); }
};

// Each speaker is an independent two-state Markov chain: off->on with
// probability p_on, on->off with p_off, initial state drawn from the stationary
// distribution. A speaker whose row comes out silent is redrawn from a derived
// seed (and, as a last resort, given one active frame) so every speaker talks.
ActivityScript gen_activity(std::size_t speakers, std::size_t frames, double p_on, double p_off,
                            std::uint64_t seed);

/// Per-speaker mean feature vectors plus isotropic Gaussian frame noise.
struct VoiceprintModel {
  Tensor voiceprints;  // S x dim
  double noise_std = 1.0;

  // Unit-variance Gaussian voiceprints, redrawn until every pair is more than
  // 4 * noise_std apart.
  static VoiceprintModel Random(std::size_t speakers, std::size_t dim, double noise_std,
                                std::mt19937_64& rng);
  double MinPairwiseDistance() const;
  double MeanPower() const;  // mean squared entry over all voiceprints
};

// frame t = sum of active voiceprints + N(0, noise_std^2) per dimension.
Tensor gen_features(const ActivityScript& script, const VoiceprintModel& model,
                    std::mt19937_64& rng);

// Adds a speaker-independent AR(1) noise process at the given SNR relative to
// `signal_power` (per dimension).
void AddBackgroundNoise(Tensor& features, double snr_db, double signal_power,
                        std::mt19937_64& rng);

// Waveform-level synthesis: each speaker is a random bank of sinusoids, the
// mixture goes through log_mel (10 ms) and stack_frames (15 / 10) so stacked
// frame t lines up with label frame t.
std::vector<double> SynthesizeWaveform(const ActivityScript& script, double sample_rate,
                                       std::mt19937_64& rng);
Tensor gen_waveform_features(const ActivityScript& script, double sample_rate,
                             std::mt19937_64& rng);

struct CorpusConfig {
  std::uint64_t seed = 0;
  // Recording counts for S = 1, 2, 3, 4 per split.
  std::vector<std::size_t> train_counts = {20, 20, 20, 0};
  std::vector<std::size_t> valid_counts = {4, 3, 3, 0};
  std::vector<std::size_t> test_counts = {4, 3, 3, 0};
  std::size_t min_frames = 500;
  std::size_t max_frames = 500;
  double p_on = 0.03;
  double p_off = 0.06;
  double noise_std = 0.5;
  bool background_noise = true;
  double snr_min_db = 5.0;
  double snr_max_db = 20.0;
  std::string mode = "feature";  // or "waveform"
  std::size_t feature_dim = 345;
  double sample_rate = 8000.0;

  static CorpusConfig FromKeyValue(KeyValueConfig& kv);
  std::string ToKeyValue() const;
  void Validate() const;
};

struct ManifestEntry {
  std::string id;
  std::string features;  // relative to the split directory
  std::string labels;
  std::size_t speakers = 0;
  std::size_t frames = 0;
};

struct CorpusSummary {
  std::vector<ManifestEntry> train, valid, test;
};

inline constexpr const char* kSplits[] = {"train", "valid", "test"};

// Writes <out>/{train,valid,test}/{manifest.jsonl,feats/,labels/}, the config
// as <out>/corpus.cfg and train-split normalization stats as <out>/norm.bin.
// `out` may not exist yet but its parent must.
CorpusSummary gen_corpus(const CorpusConfig& cfg, const std::filesystem::path& out);

std::vector<ManifestEntry> ReadManifest(const std::filesystem::path& split_dir);
void WriteLabels(const std::filesystem::path& path, const ActivityMatrix& labels);
ActivityMatrix ReadLabels(const std::filesystem::path& path, std::size_t speakers,
                          std::size_t frames);
Tensor ReadFeatures(const std::filesystem::path& path);
void WriteFeatures(const std::filesystem::path& path, const Tensor& features);

struct Recording {
  std::string id;
  Tensor features;
  ActivityMatrix labels;
};

std::vector<Recording> LoadSplit(const std::filesystem::path& split_dir);
FeatureNorm LoadCorpusNorm(const std::filesystem::path& corpus_dir);

// Frames with >= 2 active speakers over frames with >= 1, recomputed from the
// label files.
double OverlapRatio(const std::filesystem::path& split_dir);

}  // namespace eend

#endif  // EEND_DATAGEN_HPP_

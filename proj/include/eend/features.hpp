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

#ifndef EEND_FEATURES_HPP_
#define EEND_FEATURES_HPP_

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "eend/tensor.hpp"

namespace eend {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MelSpec {
  double sample_rate = 8000.0;
  std::size_t n_mels = 23;
  double window_ms = 10.0;
  double hop_ms = 10.0;
  std::size_t fft_size = 0;  // 0: next power of two >= window samples
  double fmin = 20.0;
  double fmax = 4000.0;

  std::size_t WindowSamples() const;
  std::size_t HopSamples() const;
  std::size_t FftSize() const;
  void Validate() const;
};

struct FrameStack {
  std::size_t context = 15;
  std::size_t hop = 10;
};

double HzToMel(double hz);
double MelToHz(double mel);

// n_mels x (fft_size / 2 + 1) triangular filters on the HTK mel scale.
std::vector<std::vector<double>> MelFilterbank(const MelSpec& spec);
// Centre frequency in Hz of each mel band.
std::vector<double> MelBandCenters(const MelSpec& spec);

inline constexpr double kLogMelFloor = 1e-10;

// Hann-windowed magnitude STFT -> mel filterbank -> log(x + 1e-10).
// F = floor((len - window) / hop) + 1 frames.
Tensor log_mel(std::span<const double> wave, const MelSpec& spec);

// Row t = mel rows [t*hop, t*hop + context) concatenated.
// T = floor((F - context) / hop) + 1.
Tensor stack_frames(const Tensor& mel, const FrameStack& cfg);

// Mean / standard deviation per feature column.
struct FeatureNorm {
  std::vector<double> mean;
  std::vector<double> stddev;

  static FeatureNorm Fit(const std::vector<Tensor>& features);
  Tensor Apply(const Tensor& features) const;
  bool empty() const { return mean.empty(); }
};

// 16-bit PCM mono WAV; returns samples in [-1, 1) and the sample rate.
std::vector<double> ReadWav(const std::filesystem::path& path, double* sample_rate);
void WriteWav(const std::filesystem::path& path, std::span<const double> samples,
              double sample_rate);
// Headerless little-endian fp32 samples.
std::vector<double> ReadRawFloat(const std::filesystem::path& path);

}  // namespace eend

#endif  // EEND_FEATURES_HPP_

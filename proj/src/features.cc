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

#include "eend/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "eend/tensor_io.hpp"

namespace eend {

std::size_t MelSpec::WindowSamples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t MelSpec::HopSamples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

std::size_t MelSpec::FftSize() const {
  if (fft_size != 0) return fft_size;
  std::size_t n = 1;
  while (n < WindowSamples()) n <<= 1;
  return n;
}

void MelSpec::Validate() const {
  if (n_mels == 0) throw FeatureError("n_mels must be >= 1");
  if (!(fmin < fmax) || fmax > sample_rate / 2.0) {
    throw FeatureError("mel range needs fmin < fmax <= sample_rate / 2");
  }
  if (WindowSamples() == 0 || HopSamples() == 0) throw FeatureError("window and hop must be > 0");
  if (FftSize() < WindowSamples()) throw FeatureError("fft_size smaller than the window");
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> MelBandCenters(const MelSpec& spec) {
  const double lo = HzToMel(spec.fmin), hi = HzToMel(spec.fmax);
  std::vector<double> centers(spec.n_mels);
  for (std::size_t m = 0; m < spec.n_mels; ++m) {
    centers[m] = MelToHz(lo + (hi - lo) * static_cast<double>(m + 1) /
                                  static_cast<double>(spec.n_mels + 1));
  }
  return centers;
}

std::vector<std::vector<double>> MelFilterbank(const MelSpec& spec) {
  spec.Validate();
  const std::size_t fft = spec.FftSize();
  const std::size_t bins = fft / 2 + 1;
  const double lo = HzToMel(spec.fmin), hi = HzToMel(spec.fmax);
  std::vector<double> edges(spec.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = MelToHz(lo + (hi - lo) * static_cast<double>(i) /
                                static_cast<double>(spec.n_mels + 1));
  }
  std::vector<std::vector<double>> bank(spec.n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < spec.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = spec.sample_rate * static_cast<double>(k) / static_cast<double>(fft);
      if (f > left && f < center) {
        bank[m][k] = (f - left) / (center - left);
      } else if (f >= center && f < right) {
        bank[m][k] = (right - f) / (right - center);
      }
    }
  }
  return bank;
}

Tensor log_mel(std::span<const double> wave, const MelSpec& spec) {
  spec.Validate();
  const std::size_t window = spec.WindowSamples();
  const std::size_t hop = spec.HopSamples();
  if (wave.size() < window) {
    throw FeatureError("waveform of " + std::to_string(wave.size()) +
                       " samples is shorter than one " + std::to_string(window) +
                       "-sample window");
  }
  const std::size_t frames = (wave.size() - window) / hop + 1;
  const std::size_t fft = spec.FftSize();
  const std::size_t bins = fft / 2 + 1;
  const auto bank = MelFilterbank(spec);

  std::vector<double> hann(window);
  for (std::size_t i = 0; i < window; ++i) {
    hann[i] = window == 1 ? 1.0
                          : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                 static_cast<double>(window - 1));
  }

  double* in = fftw_alloc_real(fft);
  fftw_complex* spectrum = fftw_alloc_complex(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(fft), in, spectrum, FFTW_ESTIMATE);
  std::vector<double> out(frames * spec.n_mels);
  std::vector<double> magnitude(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    std::fill(in, in + fft, 0.0);
    for (std::size_t i = 0; i < window; ++i) in[i] = wave[f * hop + i] * hann[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) magnitude[k] = std::hypot(spectrum[k][0], spectrum[k][1]);
    for (std::size_t m = 0; m < spec.n_mels; ++m) {
      double energy = 0.0;
      for (std::size_t k = 0; k < bins; ++k) energy += bank[m][k] * magnitude[k];
      out[f * spec.n_mels + m] = std::log(energy + kLogMelFloor);
    }
  }
  fftw_destroy_plan(plan);
  fftw_free(spectrum);
  fftw_free(in);
  return Tensor::FromValues({frames, spec.n_mels}, std::move(out));
}

Tensor stack_frames(const Tensor& mel, const FrameStack& cfg) {
  if (cfg.context == 0 || cfg.hop == 0) throw FeatureError("frame stacking needs context, hop >= 1");
  const std::size_t frames = mel.rows(), dim = mel.cols();
  if (frames < cfg.context) {
    throw FeatureError("cannot stack " + std::to_string(frames) + " frames with context " +
                       std::to_string(cfg.context));
  }
  const std::size_t steps = (frames - cfg.context) / cfg.hop + 1;
  const std::size_t width = dim * cfg.context;
  std::vector<double> out(steps * width);
  auto mv = mel.values();
  for (std::size_t t = 0; t < steps; ++t) {
    std::copy_n(mv.begin() + t * cfg.hop * dim, width, out.begin() + t * width);
  }
  return Tensor::FromValues({steps, width}, std::move(out));
}

FeatureNorm FeatureNorm::Fit(const std::vector<Tensor>& features) {
  if (features.empty()) throw FeatureError("cannot fit normalization on no features");
  const std::size_t dim = features.front().cols();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  double count = 0.0;
  for (const Tensor& f : features) {
    if (f.cols() != dim) throw DimensionError("feature widths differ in normalization fit");
    auto v = f.values();
    for (std::size_t r = 0; r < f.rows(); ++r) {
      for (std::size_t c = 0; c < dim; ++c) {
        sum[c] += v[r * dim + c];
        sq[c] += v[r * dim + c] * v[r * dim + c];
      }
    }
    count += static_cast<double>(f.rows());
  }
  FeatureNorm norm;
  norm.mean.resize(dim);
  norm.stddev.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    norm.mean[c] = sum[c] / count;
    const double var = std::max(sq[c] / count - norm.mean[c] * norm.mean[c], 0.0);
    norm.stddev[c] = std::sqrt(var) + 1e-8;
  }
  return norm;
}

Tensor FeatureNorm::Apply(const Tensor& features) const {
  if (empty()) return features;
  const std::size_t dim = features.cols();
  if (dim != mean.size()) throw DimensionError("normalization width mismatch");
  std::vector<double> out(features.values().begin(), features.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % dim;
    out[i] = (out[i] - mean[c]) / stddev[c];
  }
  return Tensor::FromValues(features.shape(), std::move(out));
}

namespace {

std::uint32_t U32(const std::string& b, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + off, 4);
  return v;
}

std::uint16_t U16(const std::string& b, std::size_t off) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + off, 2);
  return v;
}

}  // namespace

std::vector<double> ReadWav(const std::filesystem::path& path, double* sample_rate) {
  const std::string bytes = ReadFileBytes(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw FeatureError(path.string() + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = U32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw FeatureError(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      format = U16(bytes, body);
      channels = U16(bytes, body + 2);
      rate = U32(bytes, body + 4);
      bits = U16(bytes, body + 14);
    } else if (id == "data") {
      if (format != 1 || bits != 16 || channels != 1) {
        throw FeatureError(path.string() + ": only 16-bit PCM mono is supported");
      }
      std::vector<double> samples(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        std::int16_t s;
        std::memcpy(&s, bytes.data() + body + 2 * i, 2);
        samples[i] = static_cast<double>(s) / 32768.0;
      }
      if (sample_rate != nullptr) *sample_rate = rate;
      return samples;
    }
    pos = body + size + (size & 1);
  }
  throw FeatureError(path.string() + ": no data chunk");
}

void WriteWav(const std::filesystem::path& path, std::span<const double> samples,
              double sample_rate) {
  std::string out;
  auto put32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  out += "RIFF";
  put32(36 + data_bytes);
  out += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(rate);
  put32(rate * 2);
  put16(2);
  put16(16);
  out += "data";
  put32(data_bytes);
  for (double s : samples) {
    const double clipped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32768.0))));
  }
  WriteFileAtomic(path, out);
}

std::vector<double> ReadRawFloat(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  if (bytes.size() % 4 != 0) throw FeatureError(path.string() + ": size is not a multiple of 4");
  std::vector<double> samples(bytes.size() / 4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 4 * i, 4);
    samples[i] = f;
  }
  return samples;
}

}  // namespace eend

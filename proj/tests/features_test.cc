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
#include <filesystem>
#include <fstream>
#include <numbers>

#include "eend/features.hpp"
#include "eend/rng.hpp"
#include "support/oracles.hpp"

using namespace eend;
using namespace eend::testing;

namespace fs = std::filesystem;

namespace {

std::vector<double> Sine(double hz, std::size_t samples, double rate) {
  std::vector<double> w(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    w[i] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate);
  }
  return w;
}

fs::path TempDir() {
  const fs::path dir = fs::temp_directory_path() / "eend_features_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("silence maps to the log floor") {
  const Tensor mel = log_mel(std::vector<double>(800, 0.0), MelSpec{});
  CHECK(mel.shape() == Shape{10, 23});
  for (double v : mel.values()) CHECK(v == std::log(kLogMelFloor));
}

TEST_CASE("frame count follows floor((len - window) / hop) + 1") {
  const MelSpec spec;
  CHECK(spec.WindowSamples() == 80);
  CHECK(spec.FftSize() == 128);
  CHECK(log_mel(std::vector<double>(8000, 0.0), spec).shape() == Shape{100, 23});
  CHECK(log_mel(std::vector<double>(7999, 0.0), spec).rows() == 99);
  CHECK(log_mel(std::vector<double>(80, 0.0), spec).rows() == 1);
  CHECK_THROWS_AS(log_mel(std::vector<double>(79, 0.0), spec), FeatureError);
}

TEST_CASE("log mel matches a direct DFT of one windowed frame") {
  auto rng = MakeRng(1);
  const MelSpec spec;
  std::normal_distribution<double> n(0.0, 0.3);
  std::vector<double> wave(240);
  for (double& v : wave) v = n(rng);
  const Tensor mel = log_mel(wave, spec);
  const auto bank = MelFilterbank(spec);
  for (std::size_t f = 0; f < mel.rows(); ++f) {
    std::vector<double> frame(80);
    for (std::size_t i = 0; i < 80; ++i) {
      const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 79.0);
      frame[i] = wave[f * 80 + i] * hann;
    }
    const auto mag = NaiveDftMagnitude(frame, 128);
    for (std::size_t m = 0; m < 23; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) e += bank[m][k] * mag[k];
      CHECK(std::abs(mel.at(f, m) - std::log(e + kLogMelFloor)) < 1e-9);
    }
  }
}

TEST_CASE("a sine at a band centre peaks in that band") {
  const MelSpec spec;
  const auto centers = MelBandCenters(spec);
  // Band 0 sits below one period per 10 ms window and is left to the DFT check.
  for (std::size_t m = 1; m < spec.n_mels; ++m) {
    const Tensor mel = log_mel(Sine(centers[m], 4000, spec.sample_rate), spec);
    for (std::size_t f = 0; f < mel.rows(); ++f) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < spec.n_mels; ++k) {
        if (mel.at(f, k) > mel.at(f, best)) best = k;
      }
      CHECK(best == m);
    }
  }
}

TEST_CASE("mel scale round trip and filter shape") {
  for (double hz : {0.0, 100.0, 1000.0, 4000.0}) {
    CHECK(MelToHz(HzToMel(hz)) == doctest::Approx(hz).epsilon(1e-12));
  }
  CHECK(HzToMel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  const auto bank = MelFilterbank(MelSpec{});
  CHECK(bank.size() == 23);
  CHECK(bank[0].size() == 65);
  for (const auto& row : bank) {
    for (double w : row) CHECK((w >= 0.0 && w <= 1.0));
  }
}

TEST_CASE("stacking a single context window") {
  Tensor mel = Tensor::Zeros({15, 23});
  for (std::size_t i = 0; i < mel.numel(); ++i) mel.mutable_values()[i] = static_cast<double>(i);
  const Tensor x = stack_frames(mel, FrameStack{});
  CHECK(x.shape() == Shape{1, 345});
  for (std::size_t i = 0; i < 345; ++i) CHECK(x.values()[i] == static_cast<double>(i));
}

TEST_CASE("stacked frame count and index rows") {
  Tensor mel = Tensor::Zeros({1000, 23});
  for (std::size_t r = 0; r < 1000; ++r) {
    for (std::size_t c = 0; c < 23; ++c) mel.at(r, c) = static_cast<double>(r);
  }
  const Tensor x = stack_frames(mel, FrameStack{});
  CHECK(x.shape() == Shape{99, 345});
  for (std::size_t t = 0; t < 99; ++t) {
    for (std::size_t c = 0; c < 23; ++c) CHECK(x.at(t, c) == 10.0 * t);
    for (std::size_t j = 0; j < 15; ++j) CHECK(x.at(t, 23 * j) == 10.0 * t + j);
  }
  CHECK_THROWS_AS(stack_frames(Tensor::Zeros({14, 23}), FrameStack{}), FeatureError);
}

TEST_CASE("normalization fit and apply") {
  const Tensor a = Tensor::FromValues({2, 2}, {1.0, 10.0, 3.0, 10.0});
  const FeatureNorm norm = FeatureNorm::Fit({a});
  CHECK(norm.mean[0] == 2.0);
  CHECK(norm.stddev[0] == doctest::Approx(1.0));
  const Tensor y = norm.Apply(a);
  CHECK(y.at(0, 0) == doctest::Approx(-1.0));
  CHECK(y.at(1, 0) == doctest::Approx(1.0));
  CHECK(std::isfinite(y.at(0, 1)));
}

TEST_CASE("wav and raw float round trip") {
  const fs::path dir = TempDir();
  std::vector<double> wave{0.0, 0.5, -0.5, 0.25, -1.0};
  WriteWav(dir / "a.wav", wave, 8000.0);
  double rate = 0.0;
  const auto back = ReadWav(dir / "a.wav", &rate);
  CHECK(rate == 8000.0);
  REQUIRE(back.size() == wave.size());
  for (std::size_t i = 0; i < wave.size(); ++i) CHECK(std::abs(back[i] - wave[i]) <= 1.0 / 32768.0);

  std::ofstream(dir / "bad.wav") << "not a wav";
  CHECK_THROWS_AS(ReadWav(dir / "bad.wav", &rate), FeatureError);

  {
    std::ofstream raw(dir / "a.f32", std::ios::binary);
    const float samples[] = {0.25f, -0.75f};
    raw.write(reinterpret_cast<const char*>(samples), sizeof(samples));
  }
  const auto f = ReadRawFloat(dir / "a.f32");
  REQUIRE(f.size() == 2);
  CHECK(f[0] == 0.25);
  CHECK(f[1] == -0.75);
  fs::remove_all(dir);
}

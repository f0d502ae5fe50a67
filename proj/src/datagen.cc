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

#include "eend/datagen.hpp"

#include <cmath>
#include <limits>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "eend/rng.hpp"
#include "eend/tensor_io.hpp"

namespace eend {

namespace fs = std::filesystem;

ActivityScript gen_activity(std::size_t speakers, std::size_t frames, double p_on, double p_off,
                            std::uint64_t seed) {
  if (!(p_on > 0.0 && p_on <= 1.0) || !(p_off > 0.0 && p_off < 1.0)) {
    throw std::invalid_argument("gen_activity needs 0 < p_on <= 1 and 0 < p_off < 1");
  }
  if (speakers == 0 || frames == 0) throw std::invalid_argument("gen_activity needs S, T >= 1");
  ActivityScript script{ActivityMatrix(speakers, frames), seed};
  const double stationary_on = p_on / (p_on + p_off);
  for (std::size_t s = 0; s < speakers; ++s) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      auto rng = MakeRng(DeriveSeed(DeriveSeed(seed, s), attempt));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      bool on = u(rng) < stationary_on;
      std::size_t active = 0;
      for (std::size_t t = 0; t < frames; ++t) {
        if (t > 0) on = on ? !(u(rng) < p_off) : (u(rng) < p_on);
        script.activity.set(s, t, on);
        active += on;
      }
      if (active > 0) break;
      if (attempt == 63) {
        script.activity.set(s, std::uniform_int_distribution<std::size_t>(0, frames - 1)(rng),
                            true);
        break;
      }
    }
  }
  return script;
}

VoiceprintModel VoiceprintModel::Random(std::size_t speakers, std::size_t dim, double noise_std,
                                        std::mt19937_64& rng) {
  if (noise_std <= 0.0) throw std::invalid_argument("noise_std must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<double> v(speakers * dim);
    for (double& x : v) x = normal(rng);
    VoiceprintModel model{Tensor::FromValues({speakers, dim}, std::move(v)), noise_std};
    if (speakers < 2 || model.MinPairwiseDistance() > 4.0 * noise_std) return model;
  }
  throw std::runtime_error("could not draw separable voiceprints; lower noise_std");
}

double VoiceprintModel::MinPairwiseDistance() const {
  const std::size_t s = voiceprints.rows(), d = voiceprints.cols();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = i + 1; j < s; ++j) {
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = voiceprints.at(i, k) - voiceprints.at(j, k);
        sq += diff * diff;
      }
      best = std::min(best, std::sqrt(sq));
    }
  }
  return best;
}

double VoiceprintModel::MeanPower() const {
  double sq = 0.0;
  for (double v : voiceprints.values()) sq += v * v;
  return voiceprints.numel() == 0 ? 0.0 : sq / static_cast<double>(voiceprints.numel());
}

Tensor gen_features(const ActivityScript& script, const VoiceprintModel& model,
                    std::mt19937_64& rng) {
  if (model.voiceprints.rows() != script.speakers()) {
    throw DimensionError("gen_features: " + std::to_string(script.speakers()) +
                         " speakers but voiceprints " + ShapeString(model.voiceprints.shape()));
  }
  const std::size_t frames = script.frames(), dim = model.voiceprints.cols();
  std::normal_distribution<double> noise(0.0, model.noise_std);
  std::vector<double> out(frames * dim);
  auto vp = model.voiceprints.values();
  for (std::size_t t = 0; t < frames; ++t) {
    double* row = out.data() + t * dim;
    for (std::size_t k = 0; k < dim; ++k) row[k] = noise(rng);
    for (std::size_t s = 0; s < script.speakers(); ++s) {
      if (!script.activity.at(s, t)) continue;
      for (std::size_t k = 0; k < dim; ++k) row[k] += vp[s * dim + k];
    }
  }
  return Tensor::FromValues({frames, dim}, std::move(out));
}

void AddBackgroundNoise(Tensor& features, double snr_db, double signal_power,
                        std::mt19937_64& rng) {
  constexpr double kCorrelation = 0.9;
  const double sigma = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0));
  const double innovation = std::sqrt(1.0 - kCorrelation * kCorrelation);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t frames = features.rows(), dim = features.cols();
  std::vector<double> state(dim);
  for (double& s : state) s = normal(rng);
  auto v = features.mutable_values();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < dim; ++k) {
      if (t > 0) state[k] = kCorrelation * state[k] + innovation * normal(rng);
      v[t * dim + k] += sigma * state[k];
    }
  }
}

namespace {

constexpr std::size_t kMelFramesPerLabel = 10;
constexpr double kLabelFrameSeconds = 0.1;

MelSpec WaveformMelSpec(double sample_rate) {
  MelSpec spec;
  spec.sample_rate = sample_rate;
  spec.fmax = sample_rate / 2.0;
  return spec;
}

}  // namespace

std::vector<double> SynthesizeWaveform(const ActivityScript& script, double sample_rate,
                                       std::mt19937_64& rng) {
  constexpr std::size_t kPartials = 3;
  const auto label_samples = static_cast<std::size_t>(std::lround(sample_rate * kLabelFrameSeconds));
  const std::size_t mel_hop = label_samples / kMelFramesPerLabel;
  // Extra half label frame so the last stacked window (15 mel frames) fits.
  const std::size_t total = script.frames() * label_samples + 5 * mel_hop;
  std::uniform_real_distribution<double> freq(150.0, 0.45 * sample_rate);
  std::uniform_real_distribution<double> amp(0.05, 0.15);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> hiss(0.0, 0.005);
  std::vector<double> wave(total, 0.0);
  for (std::size_t s = 0; s < script.speakers(); ++s) {
    double f[kPartials], a[kPartials], p[kPartials];
    for (std::size_t k = 0; k < kPartials; ++k) {
      f[k] = freq(rng);
      a[k] = amp(rng);
      p[k] = phase(rng);
    }
    for (std::size_t n = 0; n < total; ++n) {
      const std::size_t frame = std::min(n / label_samples, script.frames() - 1);
      if (!script.activity.at(s, frame)) continue;
      const double time = static_cast<double>(n) / sample_rate;
      for (std::size_t k = 0; k < kPartials; ++k) {
        wave[n] += a[k] * std::sin(2.0 * std::numbers::pi * f[k] * time + p[k]);
      }
    }
  }
  for (double& w : wave) w += hiss(rng);
  return wave;
}

Tensor gen_waveform_features(const ActivityScript& script, double sample_rate,
                             std::mt19937_64& rng) {
  const std::vector<double> wave = SynthesizeWaveform(script, sample_rate, rng);
  return stack_frames(log_mel(wave, WaveformMelSpec(sample_rate)), FrameStack{});
}

CorpusConfig CorpusConfig::FromKeyValue(KeyValueConfig& kv) {
  CorpusConfig c;
  c.seed = kv.GetUint("seed", c.seed);
  c.train_counts = kv.GetSizeList("train_counts", c.train_counts);
  c.valid_counts = kv.GetSizeList("valid_counts", c.valid_counts);
  c.test_counts = kv.GetSizeList("test_counts", c.test_counts);
  c.min_frames = static_cast<std::size_t>(kv.GetUint("min_frames", c.min_frames));
  c.max_frames = static_cast<std::size_t>(kv.GetUint("max_frames", c.max_frames));
  c.p_on = kv.GetDouble("p_on", c.p_on);
  c.p_off = kv.GetDouble("p_off", c.p_off);
  c.noise_std = kv.GetDouble("noise_std", c.noise_std);
  c.background_noise = kv.GetBool("background_noise", c.background_noise);
  c.snr_min_db = kv.GetDouble("snr_min_db", c.snr_min_db);
  c.snr_max_db = kv.GetDouble("snr_max_db", c.snr_max_db);
  c.mode = kv.GetString("mode", c.mode);
  c.feature_dim = static_cast<std::size_t>(kv.GetUint("feature_dim", c.feature_dim));
  c.sample_rate = kv.GetDouble("sample_rate", c.sample_rate);
  c.Validate();
  return c;
}

std::string CorpusConfig::ToKeyValue() const {
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << "\ntrain_counts = " << list(train_counts)
     << "\nvalid_counts = " << list(valid_counts) << "\ntest_counts = " << list(test_counts)
     << "\nmin_frames = " << min_frames << "\nmax_frames = " << max_frames
     << "\np_on = " << p_on << "\np_off = " << p_off << "\nnoise_std = " << noise_std
     << "\nbackground_noise = " << (background_noise ? "true" : "false")
     << "\nsnr_min_db = " << snr_min_db << "\nsnr_max_db = " << snr_max_db
     << "\nmode = " << mode << "\nfeature_dim = " << feature_dim
     << "\nsample_rate = " << sample_rate << '\n';
  return os.str();
}

void CorpusConfig::Validate() const {
  if (mode != "feature" && mode != "waveform") {
    throw ConfigError("corpus mode must be 'feature' or 'waveform', got " + mode);
  }
  if (min_frames == 0 || min_frames > max_frames) throw ConfigError("need 1 <= min_frames <= max_frames");
  if (mode == "waveform" && feature_dim != 345) {
    throw ConfigError("waveform mode produces 345-dim stacked features");
  }
  if (snr_min_db > snr_max_db) throw ConfigError("snr_min_db > snr_max_db");
}

namespace {

ManifestEntry WriteRecording(const CorpusConfig& cfg, const fs::path& split_dir,
                             const std::string& id, std::size_t speakers, std::uint64_t seed) {
  auto rng = MakeRng(seed);
  const std::size_t frames =
      std::uniform_int_distribution<std::size_t>(cfg.min_frames, cfg.max_frames)(rng);
  const ActivityScript script =
      gen_activity(speakers, frames, cfg.p_on, cfg.p_off, DeriveSeed(seed, "activity"));
  Tensor features;
  if (cfg.mode == "feature") {
    const VoiceprintModel model =
        VoiceprintModel::Random(speakers, cfg.feature_dim, cfg.noise_std, rng);
    features = gen_features(script, model, rng);
    if (cfg.background_noise) {
      const double snr =
          std::uniform_real_distribution<double>(cfg.snr_min_db, cfg.snr_max_db)(rng);
      AddBackgroundNoise(features, snr, model.MeanPower(), rng);
    }
  } else {
    features = gen_waveform_features(script, cfg.sample_rate, rng);
  }
  ManifestEntry entry{id, "feats/" + id + ".feat", "labels/" + id + ".lab", speakers, frames};
  WriteFeatures(split_dir / entry.features, features);
  WriteLabels(split_dir / entry.labels, script.activity);
  return entry;
}

void WriteManifest(const fs::path& split_dir, const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::ordered_json j = {{"id", e.id},
                                {"features", e.features},
                                {"labels", e.labels},
                                {"S", e.speakers},
                                {"T", e.frames}};
    out += j.dump() + '\n';
  }
  WriteFileAtomic(split_dir / "manifest.jsonl", out);
}

}  // namespace

CorpusSummary gen_corpus(const CorpusConfig& cfg, const fs::path& out) {
  cfg.Validate();
  fs::path target = fs::absolute(out).lexically_normal();
  if (!target.has_filename()) target = target.parent_path();
  const fs::path parent = target.parent_path();
  if (!fs::is_directory(parent)) {
    throw std::runtime_error("output parent directory does not exist: " + parent.string());
  }
  fs::create_directories(out);
  CorpusSummary summary;
  std::vector<ManifestEntry>* lists[] = {&summary.train, &summary.valid, &summary.test};
  const std::vector<std::size_t>* counts[] = {&cfg.train_counts, &cfg.valid_counts,
                                              &cfg.test_counts};
  const std::uint64_t base = DeriveSeed(cfg.seed, "recording");
  std::uint64_t global_index = 0;
  for (int split = 0; split < 3; ++split) {
    const fs::path dir = out / kSplits[split];
    fs::create_directories(dir / "feats");
    fs::create_directories(dir / "labels");
    for (std::size_t s = 0; s < counts[split]->size(); ++s) {
      for (std::size_t i = 0; i < (*counts[split])[s]; ++i, ++global_index) {
        char id[64];
        std::snprintf(id, sizeof(id), "%s_%06llu", kSplits[split],
                      static_cast<unsigned long long>(global_index));
        lists[split]->push_back(
            WriteRecording(cfg, dir, id, s + 1, DeriveSeed(base, global_index)));
      }
    }
    WriteManifest(dir, *lists[split]);
  }
  WriteFileAtomic(out / "corpus.cfg", cfg.ToKeyValue());

  std::vector<Tensor> train_features;
  for (const auto& e : summary.train) train_features.push_back(ReadFeatures(out / "train" / e.features));
  if (!train_features.empty()) {
    const FeatureNorm norm = FeatureNorm::Fit(train_features);
    const std::size_t dim = norm.mean.size();
    WriteTensorFile(out / "norm.bin", {{"norm.mean", Tensor::FromValues({dim}, norm.mean)},
                                       {"norm.std", Tensor::FromValues({dim}, norm.stddev)}});
  }
  return summary;
}

std::vector<ManifestEntry> ReadManifest(const fs::path& split_dir) {
  const fs::path path = split_dir / "manifest.jsonl";
  if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path.string());
  std::istringstream in(ReadFileBytes(path));
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("id").get<std::string>(), j.at("features").get<std::string>(),
                         j.at("labels").get<std::string>(), j.at("S").get<std::size_t>(),
                         j.at("T").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad manifest record: " + e.what());
    }
  }
  return entries;
}

void WriteLabels(const fs::path& path, const ActivityMatrix& labels) {
  const auto& d = labels.data();
  WriteFileAtomic(path, std::string(d.begin(), d.end()));
}

ActivityMatrix ReadLabels(const fs::path& path, std::size_t speakers, std::size_t frames) {
  const std::string bytes = ReadFileBytes(path);
  if (bytes.size() != speakers * frames) {
    throw FormatError(path.string() + ": expected " + std::to_string(speakers * frames) +
                      " label bytes, found " + std::to_string(bytes.size()));
  }
  return ActivityMatrix(speakers, frames, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

Tensor ReadFeatures(const fs::path& path) { return FindTensor(ReadTensorFile(path), "features"); }

void WriteFeatures(const fs::path& path, const Tensor& features) {
  WriteTensorFile(path, {{"features", features}});
}

std::vector<Recording> LoadSplit(const fs::path& split_dir) {
  std::vector<Recording> out;
  for (const auto& e : ReadManifest(split_dir)) {
    Recording r{e.id, ReadFeatures(split_dir / e.features),
                ReadLabels(split_dir / e.labels, e.speakers, e.frames)};
    if (r.features.rows() != e.frames) {
      throw FormatError(e.id + ": feature rows " + std::to_string(r.features.rows()) +
                        " != manifest T " + std::to_string(e.frames));
    }
    out.push_back(std::move(r));
  }
  return out;
}

FeatureNorm LoadCorpusNorm(const fs::path& corpus_dir) {
  const fs::path path = corpus_dir / "norm.bin";
  if (!fs::exists(path)) return {};
  const auto tensors = ReadTensorFile(path);
  const Tensor& m = FindTensor(tensors, "norm.mean");
  const Tensor& s = FindTensor(tensors, "norm.std");
  return {{m.values().begin(), m.values().end()}, {s.values().begin(), s.values().end()}};
}

double OverlapRatio(const fs::path& split_dir) {
  double speech = 0.0, overlap = 0.0;
  for (const auto& e : ReadManifest(split_dir)) {
    const ActivityMatrix a = ReadLabels(split_dir / e.labels, e.speakers, e.frames);
    for (std::size_t t = 0; t < a.frames(); ++t) {
      const std::size_t n = a.ActiveCount(t);
      speech += n >= 1;
      overlap += n >= 2;
    }
  }
  return speech == 0.0 ? 0.0 : overlap / speech;
}

}  // namespace eend

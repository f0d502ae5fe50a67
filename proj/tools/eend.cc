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

// eend: corpus generation, training, inference, scoring and ablation.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "eend/config.hpp"
#include "eend/datagen.hpp"
#include "eend/features.hpp"
#include "eend/inference.hpp"
#include "eend/metrics.hpp"
#include "eend/tensor_io.hpp"
#include "eend/trainer.hpp"

namespace fs = std::filesystem;
using namespace eend;

namespace {

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> variant;
  std::optional<std::size_t> epochs;
  std::optional<double> threshold;
  std::optional<std::size_t> median_window;
  bool per_layer = false;
  bool no_prune = false;
  std::string out;
};

KeyValueConfig LoadConfig(const std::string& path) {
  if (path.empty()) return KeyValueConfig::Parse("");
  if (!fs::exists(path)) throw CliError("config file not found: " + path);
  return KeyValueConfig::Load(path);
}

void RequireExists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw CliError(what + " not found: " + p.string());
}

TrainConfig BuildTrainConfig(const Common& c) {
  KeyValueConfig kv = LoadConfig(c.config);
  TrainConfig t = TrainConfig::FromKeyValue(kv);
  kv.Finish();
  if (c.seed) t.seed = *c.seed;
  if (c.variant) t.variant = *c.variant;
  if (c.epochs) t.epochs = *c.epochs;
  if (c.threshold) t.threshold = *c.threshold;
  if (c.median_window) t.median_window = *c.median_window;
  DescribeVariant(t.variant);
  t.Validate();
  return t;
}

// ---------------------------------------------------------------------------
// datagen

int CmdDatagen(const Common& c) {
  KeyValueConfig kv = LoadConfig(c.config);
  CorpusConfig cfg = CorpusConfig::FromKeyValue(kv);
  kv.Finish();
  if (c.seed) cfg.seed = *c.seed;
  const CorpusSummary s = gen_corpus(cfg, c.out);
  const fs::path out(c.out);
  for (const char* split : kSplits) {
    const auto& list = std::string(split) == "train"   ? s.train
                       : std::string(split) == "valid" ? s.valid
                                                       : s.test;
    std::size_t by_count[5] = {0, 0, 0, 0, 0};
    for (const auto& e : list) by_count[std::min<std::size_t>(e.speakers, 4)]++;
    std::printf("%-5s %4zu recordings (S=1: %zu, S=2: %zu, S=3: %zu, S=4: %zu), overlap %.4f\n",
                split, list.size(), by_count[1], by_count[2], by_count[3], by_count[4],
                list.empty() ? 0.0 : OverlapRatio(out / split));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

int CmdTrain(const Common& c, const std::string& corpus, const std::string& resume) {
  RequireExists(corpus, "corpus");
  const TrainConfig t = BuildTrainConfig(c);
  TrainOptions o;
  o.corpus = corpus;
  o.out = c.out;
  if (!resume.empty()) {
    RequireExists(resume, "checkpoint");
    o.resume = resume;
  }
  o.on_epoch = [](const EpochLog& e) {
    std::printf("%s\n", e.ToJson().c_str());
    std::fflush(stdout);
  };
  const TrainResult r = train(t, o);
  std::printf("best epoch %zu, best valid loss %.6f, %lld optimizer steps\n", r.best_epoch,
              r.best_valid_loss, static_cast<long long>(r.total_steps));
  return 0;
}

// ---------------------------------------------------------------------------
// infer

struct InferInput {
  std::string id;
  Tensor features;
};

Tensor FeaturesFromFile(const fs::path& path) {
  if (path.extension() == ".wav") {
    double rate = 0.0;
    const std::vector<double> wave = ReadWav(path, &rate);
    MelSpec spec;
    spec.sample_rate = rate;
    spec.fmax = rate / 2.0;
    return stack_frames(log_mel(wave, spec), FrameStack{});
  }
  return ReadFeatures(path);
}

fs::path PosteriorPath(const fs::path& out, const std::string& id, std::optional<std::size_t> layer) {
  return out / "posteriors" /
         (layer ? id + ".layer" + std::to_string(*layer) + ".post" : id + ".post");
}

int CmdInfer(const Common& c, const std::string& checkpoint, const std::string& corpus,
             const std::string& split, const std::vector<std::string>& feature_files,
             std::uint64_t shuffle_seed) {
  RequireExists(checkpoint, "checkpoint");
  if (corpus.empty() == feature_files.empty()) {
    throw CliError("give exactly one of --corpus or --features");
  }
  std::vector<InferInput> inputs;
  if (!corpus.empty()) {
    RequireExists(fs::path(corpus) / split / "manifest.jsonl", "manifest");
    for (Recording& r : LoadSplit(fs::path(corpus) / split)) {
      inputs.push_back({r.id, std::move(r.features)});
    }
  } else {
    for (const std::string& f : feature_files) {
      RequireExists(f, "features");
      inputs.push_back({fs::path(f).stem().string(), FeaturesFromFile(f)});
    }
  }
  if (inputs.empty()) {
    std::printf("no recordings; nothing written\n");
    return 0;
  }

  Checkpoint ck = LoadCheckpoint(checkpoint);
  const double threshold = c.threshold.value_or(0.5);
  const std::size_t median = c.median_window.value_or(11);
  bool pruned = ck.model.pruned();
  if (!c.no_prune && !c.per_layer) {
    std::string notice;
    pruned = prune_for_inference(ck.model, &notice) || pruned;
    if (!notice.empty()) std::fprintf(stderr, "note: %s\n", notice.c_str());
  } else if (c.per_layer && ck.model.pruned() && ck.model.variant().has_intermediate()) {
    throw CliError("--per-layer needs an unpruned checkpoint");
  }

  const fs::path out(c.out);
  fs::create_directories(out / "posteriors");
  std::string rttm;
  DiarizeOptions opt;
  opt.threshold = threshold;
  opt.per_layer = c.per_layer;
  opt.shuffle_seed = shuffle_seed;
  const std::size_t layers = ck.model.config().encoder.layers;
  for (const InferInput& in : inputs) {
    const Diarization d = diarize(ck.model, ck.norm.Apply(in.features), opt);
    rttm += to_rttm(binarize(d.final, threshold, median), in.id);
    if (c.per_layer) {
      // Intermediate layers first, the final prediction is layer L.
      const std::size_t first = layers + 1 - d.layers.size();
      for (std::size_t i = 0; i < d.layers.size(); ++i) {
        WriteTensorFile(PosteriorPath(out, in.id, first + i),
                        {{"posteriors", d.layers[i].posteriors}});
      }
    } else {
      WriteTensorFile(PosteriorPath(out, in.id, std::nullopt), {{"posteriors", d.final.posteriors}});
    }
    std::printf("%s: %zu speakers, %zu frames\n", in.id.c_str(), d.final.speakers(),
                d.final.frames());
  }
  WriteFileAtomic(out / "hyp.rttm", rttm);
  nlohmann::ordered_json meta = {{"checkpoint", fs::absolute(checkpoint).string()},
                                 {"variant", ck.model.variant().id},
                                 {"pruned", pruned},
                                 {"threshold", threshold},
                                 {"median_window", median},
                                 {"per_layer", c.per_layer},
                                 {"layers", layers},
                                 {"shuffle_seed", shuffle_seed},
                                 {"recordings", inputs.size()}};
  WriteFileAtomic(out / "infer.json", meta.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// score

using ActivitySet = std::map<std::string, ActivityMatrix>;

bool IsSplitDir(const fs::path& p) { return fs::is_directory(p) && fs::exists(p / "manifest.jsonl"); }

ActivitySet LoadLabelsDir(const fs::path& split) {
  ActivitySet out;
  for (const ManifestEntry& e : ReadManifest(split)) {
    out[e.id] = ReadLabels(split / e.labels, e.speakers, e.frames);
  }
  return out;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path RttmPath(const fs::path& p) {
  if (fs::is_directory(p) && fs::exists(p / "hyp.rttm")) return p / "hyp.rttm";
  return p;
}

constexpr std::size_t kMaxLayers = 64;

std::size_t CollarFrames(double seconds) {
  return static_cast<std::size_t>(std::floor(seconds / kFrameSeconds + 1e-9));
}

int CmdScore(const Common& c, const std::string& ref_path, const std::string& hyp_path,
             std::optional<double> collar) {
  RequireExists(ref_path, "reference");
  RequireExists(hyp_path, "hypothesis");
  const bool ref_labels = IsSplitDir(ref_path);
  std::map<std::string, RttmRecording> ref_rttm;
  ActivitySet ref;
  if (ref_labels) {
    ref = LoadLabelsDir(ref_path);
  } else {
    ref_rttm = ParseRttm(Slurp(RttmPath(ref_path)));
  }
  const double threshold = c.threshold.value_or(0.5);
  const std::size_t median = c.median_window.value_or(11);

  std::vector<std::pair<std::string, DiarizationScore>> rows;
  if (c.per_layer) {
    if (!ref_labels) throw CliError("per-layer scoring needs a corpus split as reference");
    const fs::path dir = fs::path(hyp_path) / "posteriors";
    RequireExists(dir, "posterior directory");
    std::map<std::size_t, ErrorCounts> by_layer;
    for (const auto& [id, labels] : ref) {
      std::size_t found = 0;
      for (std::size_t l = 1; l <= kMaxLayers; ++l) {
        const fs::path p = PosteriorPath(hyp_path, id, l);
        if (!fs::exists(p)) continue;
        const Tensor post = FindTensor(ReadTensorFile(p), "posteriors");
        by_layer[l] += ScoreCounts(labels, binarize({post}, threshold, median));
        ++found;
      }
      if (found == 0) throw CliError("no per-layer posteriors for " + id);
    }
    if (by_layer.empty()) throw CliError("no per-layer posterior files under " + dir.string());
    const std::size_t last = by_layer.rbegin()->first;
    for (const auto& [l, counts] : by_layer) {
      rows.push_back({l == last ? "Last" : std::to_string(l), DiarizationScore::FromCounts(counts)});
    }
    std::cout << FormatScoreTable(rows, "Layer");
  } else {
    const bool hyp_labels = IsSplitDir(hyp_path);
    ActivitySet hyp_set;
    std::map<std::string, RttmRecording> hyp_rttm;
    if (hyp_labels) {
      hyp_set = LoadLabelsDir(hyp_path);
    } else {
      hyp_rttm = ParseRttm(Slurp(RttmPath(hyp_path)));
    }
    const double collar_s = collar.value_or(!ref_labels && !hyp_labels ? 0.25 : 0.0);
    std::vector<std::string> ids;
    if (ref_labels) {
      for (const auto& [id, _] : ref) ids.push_back(id);
    } else {
      for (const auto& [id, _] : ref_rttm) ids.push_back(id);
    }
    ErrorCounts total;
    for (const std::string& id : ids) {
      ActivityMatrix r = ref_labels ? ref.at(id) : RttmToActivity(ref_rttm.at(id), 0);
      ActivityMatrix h;
      if (hyp_labels) {
        auto it = hyp_set.find(id);
        h = it != hyp_set.end() ? it->second : ActivityMatrix(0, r.frames());
      } else {
        auto it = hyp_rttm.find(id);
        h = it != hyp_rttm.end() ? RttmToActivity(it->second, 0) : ActivityMatrix(0, r.frames());
      }
      const std::size_t frames = std::max(r.frames(), h.frames());
      auto pad = [frames](const ActivityMatrix& m) {
        if (m.frames() == frames) return m;
        ActivityMatrix p(m.speakers(), frames);
        for (std::size_t s = 0; s < m.speakers(); ++s)
          for (std::size_t t = 0; t < m.frames(); ++t) p.set(s, t, m.at(s, t));
        return p;
      };
      r = pad(r);
      h = pad(h);
      const auto mask = CollarMask(r, CollarFrames(collar_s));
      total += ScoreCounts(r, h, &mask);
    }
    rows.push_back({"Total", DiarizationScore::FromCounts(total)});
    std::cout << FormatScoreTable(rows);
  }
  if (!c.out.empty()) {
    const fs::path out(c.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    WriteFileAtomic(out, FormatScoreRecords(rows));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// ablate

std::string FormatAblationTable(
    const std::vector<std::tuple<std::string, std::size_t, DiarizationScore>>& rows) {
  std::size_t width = 6;
  for (const auto& [label, _, __] : rows) width = std::max(width, label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "System" << std::right << " | "
     << std::setw(10) << "Params" << " | " << std::setw(7) << "DER" << std::setw(7) << "MS"
     << std::setw(7) << "FA" << std::setw(7) << "CF" << " | " << std::setw(7) << "SAD MS"
     << std::setw(7) << "SAD FA" << '\n';
  os << std::string(width, '-') << "-+-" << std::string(10, '-') << "-+-" << std::string(28, '-')
     << "-+-" << std::string(14, '-') << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& [label, params, s] : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << label << std::right << " | "
       << std::setw(10) << params << " | " << std::setw(7) << s.der << std::setw(7) << s.ms
       << std::setw(7) << s.fa << std::setw(7) << s.cf << " | " << std::setw(7) << s.sad_ms
       << std::setw(7) << s.sad_fa << '\n';
  }
  return os.str();
}

int CmdAblate(const Common& c, const std::string& corpus, const std::vector<int>& variants) {
  RequireExists(corpus, "corpus");
  RequireExists(fs::path(corpus) / "test" / "manifest.jsonl", "test manifest");
  const fs::path out(c.out);
  fs::create_directories(out);
  const std::vector<Recording> test = LoadSplit(fs::path(corpus) / "test");
  std::vector<std::tuple<std::string, std::size_t, DiarizationScore>> rows;
  for (int v : variants) {
    Common vc = c;
    vc.variant = v;
    const TrainConfig t = BuildTrainConfig(vc);
    const fs::path dir = out / ("variant" + std::to_string(v));
    const fs::path cache = dir / "score.json";
    const std::string signature = t.ToKeyValue();
    std::optional<nlohmann::json> cached;
    if (fs::exists(cache)) {
      nlohmann::json j = nlohmann::json::parse(Slurp(cache));
      if (j.value("config", "") == signature) cached = j;
    }
    if (!cached) {
      std::printf("variant %d: training\n", v);
      std::fflush(stdout);
      TrainOptions o;
      o.corpus = corpus;
      o.out = dir;
      // Resume an interrupted run of the same configuration.
      if (fs::exists(dir / "final.ckpt") && fs::exists(dir / "train.cfg") &&
          Slurp(dir / "train.cfg") == signature) {
        o.resume = dir / "final.ckpt";
      }
      train(t, o);
      Checkpoint ck = LoadCheckpoint(dir / "best.ckpt", v);
      const std::size_t params = ck.model.ParameterCount();
      prune_for_inference(ck.model);
      ErrorCounts total;
      for (const Recording& r : test) {
        const Diarization d = diarize(ck.model, ck.norm.Apply(r.features), {});
        total += ScoreCounts(r.labels, binarize(d.final, t.threshold, t.median_window));
      }
      const DiarizationScore s = DiarizationScore::FromCounts(total);
      nlohmann::ordered_json j = {{"variant", v},  {"name", DescribeVariant(v).name},
                                  {"params", params}, {"DER", s.der},
                                  {"MS", s.ms},     {"FA", s.fa},
                                  {"CF", s.cf},     {"SAD_MS", s.sad_ms},
                                  {"SAD_FA", s.sad_fa}, {"config", signature}};
      WriteFileAtomic(cache, j.dump(2) + "\n");
      cached = nlohmann::json::parse(j.dump());
    } else {
      std::printf("variant %d: cached\n", v);
    }
    DiarizationScore s;
    s.der = (*cached)["DER"];
    s.ms = (*cached)["MS"];
    s.fa = (*cached)["FA"];
    s.cf = (*cached)["CF"];
    s.sad_ms = (*cached)["SAD_MS"];
    s.sad_fa = (*cached)["SAD_FA"];
    rows.push_back({std::to_string(v) + " " + DescribeVariant(v).name,
                    (*cached)["params"].get<std::size_t>(), s});
  }
  const std::string table = FormatAblationTable(rows);
  WriteFileAtomic(out / "ablation.txt", table);
  std::cout << table;
  return 0;
}

void AddCommon(CLI::App* app, Common& c, bool train_flags, bool infer_flags) {
  app->add_option("--config", c.config, "key = value configuration file");
  app->add_option("--seed", c.seed, "random seed");
  if (train_flags) {
    app->add_option("--variant", c.variant, "model variant 1-7")->check(CLI::Range(1, 7));
    app->add_option("--epochs", c.epochs, "training epochs");
  }
  if (infer_flags) {
    app->add_option("--threshold", c.threshold, "speaker existence / activity threshold");
    app->add_option("--median-window", c.median_window, "median filter length in frames (odd)");
    app->add_flag("--per-layer", c.per_layer, "per-layer posteriors or scores");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end neural diarization with attribute attractors"};
  app.require_subcommand(1);
  Common c;

  auto* datagen = app.add_subcommand("datagen", "generate a synthetic corpus");
  AddCommon(datagen, c, false, false);
  datagen->add_option("--out", c.out, "corpus directory")->required();

  std::string corpus, resume;
  auto* train_cmd = app.add_subcommand("train", "train one model variant");
  AddCommon(train_cmd, c, true, false);
  train_cmd->add_option("--corpus", corpus, "corpus directory")->required();
  train_cmd->add_option("--resume", resume, "checkpoint to continue from");
  train_cmd->add_option("--out", c.out, "output directory")->required();

  std::string checkpoint, split = "test";
  std::vector<std::string> features;
  std::uint64_t shuffle_seed = 0;
  auto* infer = app.add_subcommand("infer", "diarize recordings with a checkpoint");
  AddCommon(infer, c, false, true);
  infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  infer->add_option("--corpus", corpus, "corpus directory");
  infer->add_option("--split", split, "corpus split to diarize");
  infer->add_option("--features", features, "feature files (.feat) or 16-bit mono WAV");
  infer->add_option("--shuffle-seed", shuffle_seed, "frame order seed for LSTM attractors");
  infer->add_flag("--no-prune", c.no_prune, "keep intermediate speaker heads");
  infer->add_option("--out", c.out, "output directory")->required();

  std::string ref, hyp;
  std::optional<double> collar;
  auto* score = app.add_subcommand("score", "score a hypothesis against a reference");
  AddCommon(score, c, false, true);
  score->add_option("--ref", ref, "corpus split directory or RTTM")->required();
  score->add_option("--hyp", hyp, "RTTM, inference output directory or corpus split")->required();
  score->add_option("--collar", collar, "collar in seconds (default 0.25 for RTTM vs RTTM)");
  score->add_option("--out", c.out, "write line-delimited score records here");

  std::vector<int> variants = {1, 2, 3, 4, 5, 6, 7};
  auto* ablate = app.add_subcommand("ablate", "train and score several variants");
  AddCommon(ablate, c, false, false);
  ablate->add_option("--epochs", c.epochs, "training epochs");
  ablate->add_option("--corpus", corpus, "corpus directory")->required();
  ablate->add_option("--variants", variants, "variant ids")->delimiter(',')->check(CLI::Range(1, 7));
  ablate->add_option("--out", c.out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (datagen->parsed()) return CmdDatagen(c);
    if (train_cmd->parsed()) return CmdTrain(c, corpus, resume);
    if (infer->parsed()) return CmdInfer(c, checkpoint, corpus, split, features, shuffle_seed);
    if (score->parsed()) return CmdScore(c, ref, hyp, collar);
    if (ablate->parsed()) return CmdAblate(c, corpus, variants);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

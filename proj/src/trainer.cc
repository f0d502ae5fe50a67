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

#include "eend/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "eend/inference.hpp"
#include "eend/metrics.hpp"
#include "eend/rng.hpp"
#include "eend/tensor_io.hpp"

namespace eend {

namespace fs = std::filesystem;

TrainConfig TrainConfig::FromKeyValue(KeyValueConfig& kv) {
  TrainConfig c;
  auto sz = [&](const char* key, std::size_t fallback) {
    return static_cast<std::size_t>(kv.GetUint(key, fallback));
  };
  c.variant = static_cast<int>(kv.GetInt("variant", c.variant));
  c.batch_size = sz("batch_size", c.batch_size);
  c.epochs = sz("epochs", c.epochs);
  c.lr = kv.GetDouble("lr", c.lr);
  c.beta1 = kv.GetDouble("beta1", c.beta1);
  c.beta2 = kv.GetDouble("beta2", c.beta2);
  c.weight_decay = kv.GetDouble("weight_decay", c.weight_decay);
  c.warmup_steps = sz("warmup_steps", c.warmup_steps);
  c.grad_clip = kv.GetDouble("grad_clip", c.grad_clip);
  c.chunk_frames = sz("chunk_frames", c.chunk_frames);
  c.seed = kv.GetUint("seed", c.seed);
  c.eval_every = sz("eval_every", c.eval_every);
  c.alpha = kv.GetDouble("alpha", c.alpha);
  c.beta = kv.GetDouble("beta", c.beta);
  c.layers = sz("layers", c.layers);
  c.dim = sz("dim", c.dim);
  c.heads = sz("heads", c.heads);
  c.ff_dim = sz("ff_dim", c.ff_dim);
  c.conv_kernel = sz("conv_kernel", c.conv_kernel);
  c.attributes = sz("attributes", c.attributes);
  c.max_attractors = sz("max_attractors", c.max_attractors);
  c.dropout = kv.GetDouble("dropout", c.dropout);
  c.positional_encoding = kv.GetBool("positional_encoding", c.positional_encoding);
  c.augment_dims = kv.GetBool("augment_dims", c.augment_dims);
  c.threshold = kv.GetDouble("threshold", c.threshold);
  c.median_window = sz("median_window", c.median_window);
  return c;
}

std::string TrainConfig::ToKeyValue() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant = " << variant << "\nbatch_size = " << batch_size << "\nepochs = " << epochs
     << "\nlr = " << lr << "\nbeta1 = " << beta1 << "\nbeta2 = " << beta2
     << "\nweight_decay = " << weight_decay << "\nwarmup_steps = " << warmup_steps
     << "\ngrad_clip = " << grad_clip << "\nchunk_frames = " << chunk_frames
     << "\nseed = " << seed << "\neval_every = " << eval_every << "\nalpha = " << alpha
     << "\nbeta = " << beta << "\nlayers = " << layers << "\ndim = " << dim
     << "\nheads = " << heads << "\nff_dim = " << ff_dim << "\nconv_kernel = " << conv_kernel
     << "\nattributes = " << attributes << "\nmax_attractors = " << max_attractors
     << "\ndropout = " << dropout
     << "\npositional_encoding = " << (positional_encoding ? "true" : "false")
     << "\naugment_dims = " << (augment_dims ? "true" : "false")
     << "\nthreshold = " << threshold << "\nmedian_window = " << median_window << '\n';
  return os.str();
}

void TrainConfig::Validate() const {
  DescribeVariant(variant);
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (chunk_frames == 0) throw ConfigError("chunk_frames must be >= 1");
  if (eval_every == 0) throw ConfigError("eval_every must be >= 1");
  if (median_window == 0 || median_window % 2 == 0) throw ConfigError("median_window must be odd");
}

ModelConfig TrainConfig::MakeModelConfig(std::size_t input_dim) const {
  ModelConfig m;
  m.variant = variant;
  m.encoder.input_dim = input_dim;
  m.encoder.layers = layers;
  m.encoder.dim = dim;
  m.encoder.heads = heads;
  m.encoder.ff_dim = ff_dim;
  m.encoder.conv_kernel = conv_kernel;
  m.encoder.dropout = dropout;
  m.encoder.positional_encoding = positional_encoding;
  m.attributes = attributes;
  m.max_attractors = max_attractors;
  m.init_seed = DeriveSeed(seed, "model");
  return m;
}

std::string EpochLog::ToJson() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["valid_loss"] = valid_loss ? nlohmann::ordered_json(*valid_loss) : nullptr;
  j["valid_DER"] = valid_der ? nlohmann::ordered_json(*valid_der) : nullptr;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

enum MetaField {
  kMetaVariant,
  kMetaInputDim,
  kMetaLayers,
  kMetaDim,
  kMetaHeads,
  kMetaFfDim,
  kMetaConvKernel,
  kMetaAttributes,
  kMetaMaxAttractors,
  kMetaPositional,
  kMetaDropout,
  kMetaPruned,
  kMetaFieldCount
};

Tensor VectorTensor(const std::vector<double>& v) { return Tensor::FromValues({v.size()}, v); }

}  // namespace

void SaveCheckpoint(const fs::path& path, const Model& model, const FeatureNorm& norm,
                    std::size_t epoch, const AdamWState* optimizer, double best_valid_loss) {
  const ModelConfig& c = model.config();
  std::vector<double> meta(kMetaFieldCount);
  meta[kMetaVariant] = c.variant;
  meta[kMetaInputDim] = static_cast<double>(c.encoder.input_dim);
  meta[kMetaLayers] = static_cast<double>(c.encoder.layers);
  meta[kMetaDim] = static_cast<double>(c.encoder.dim);
  meta[kMetaHeads] = static_cast<double>(c.encoder.heads);
  meta[kMetaFfDim] = static_cast<double>(c.encoder.ff_dim);
  meta[kMetaConvKernel] = static_cast<double>(c.encoder.conv_kernel);
  meta[kMetaAttributes] = static_cast<double>(c.attributes);
  meta[kMetaMaxAttractors] = static_cast<double>(c.max_attractors);
  meta[kMetaPositional] = c.encoder.positional_encoding ? 1.0 : 0.0;
  meta[kMetaDropout] = c.encoder.dropout;
  meta[kMetaPruned] = model.pruned() ? 1.0 : 0.0;

  std::vector<NamedTensor> out;
  out.push_back({"meta.config", VectorTensor(meta)});
  out.push_back({"meta.epoch", Tensor::Scalar(static_cast<double>(epoch))});
  out.push_back({"meta.best_valid_loss", Tensor::Scalar(best_valid_loss)});
  if (!norm.empty()) {
    out.push_back({"norm.mean", VectorTensor(norm.mean)});
    out.push_back({"norm.std", VectorTensor(norm.stddev)});
  }
  const auto& entries = model.params().entries();
  for (const auto& e : entries) out.push_back(e);
  if (optimizer != nullptr && optimizer->m.size() == entries.size()) {
    out.push_back({"opt.step", Tensor::Scalar(static_cast<double>(optimizer->step))});
    for (std::size_t i = 0; i < entries.size(); ++i) {
      out.push_back({"opt.m." + entries[i].name, Tensor::FromValues(entries[i].tensor.shape(),
                                                                     optimizer->m[i])});
      out.push_back({"opt.v." + entries[i].name, Tensor::FromValues(entries[i].tensor.shape(),
                                                                     optimizer->v[i])});
    }
  }
  WriteTensorFile(path, out);
}

Checkpoint LoadCheckpoint(const fs::path& path, std::optional<int> expected_variant) {
  const auto tensors = ReadTensorFile(path);
  const Tensor& meta_t = FindTensor(tensors, "meta.config");
  if (meta_t.numel() != kMetaFieldCount) throw FormatError(path.string() + ": bad meta.config");
  auto meta = meta_t.values();
  const int variant = static_cast<int>(meta[kMetaVariant]);
  if (expected_variant && *expected_variant != variant) {
    throw VariantMismatchError(path.string() + " holds variant " + std::to_string(variant) +
                               ", expected variant " + std::to_string(*expected_variant));
  }
  ModelConfig c;
  c.variant = variant;
  auto sz = [&](MetaField f) { return static_cast<std::size_t>(meta[f]); };
  c.encoder.input_dim = sz(kMetaInputDim);
  c.encoder.layers = sz(kMetaLayers);
  c.encoder.dim = sz(kMetaDim);
  c.encoder.heads = sz(kMetaHeads);
  c.encoder.ff_dim = sz(kMetaFfDim);
  c.encoder.conv_kernel = sz(kMetaConvKernel);
  c.encoder.positional_encoding = meta[kMetaPositional] != 0.0;
  c.encoder.dropout = meta[kMetaDropout];
  c.attributes = sz(kMetaAttributes);
  c.max_attractors = sz(kMetaMaxAttractors);

  Checkpoint ckpt{Model(c), {}, 0, {}, 0.0};
  if (meta[kMetaPruned] != 0.0) ckpt.model.PruneForInference();
  for (const auto& e : ckpt.model.params().entries()) {
    const Tensor& stored = FindTensor(tensors, e.name);
    if (stored.shape() != e.tensor.shape()) {
      throw FormatError(path.string() + ": parameter " + e.name + " has shape " +
                        ShapeString(stored.shape()) + ", model expects " +
                        ShapeString(e.tensor.shape()));
    }
    Tensor dst = e.tensor;
    std::copy(stored.values().begin(), stored.values().end(), dst.mutable_values().begin());
  }
  for (const auto& nt : tensors) {
    const bool known = nt.name.starts_with("meta.") || nt.name.starts_with("norm.") ||
                       nt.name.starts_with("opt.") || ckpt.model.params().Contains(nt.name);
    if (!known) throw FormatError(path.string() + ": unexpected tensor " + nt.name);
  }
  ckpt.epoch = static_cast<std::size_t>(FindTensor(tensors, "meta.epoch").item());
  ckpt.best_valid_loss = FindTensor(tensors, "meta.best_valid_loss").item();
  if (const Tensor* m = FindTensorOrNull(tensors, "norm.mean")) {
    const Tensor& s = FindTensor(tensors, "norm.std");
    ckpt.norm.mean.assign(m->values().begin(), m->values().end());
    ckpt.norm.stddev.assign(s.values().begin(), s.values().end());
  }
  if (const Tensor* step = FindTensorOrNull(tensors, "opt.step")) {
    ckpt.optimizer.step = static_cast<std::int64_t>(step->item());
    for (const auto& e : ckpt.model.params().entries()) {
      const Tensor& m = FindTensor(tensors, "opt.m." + e.name);
      const Tensor& v = FindTensor(tensors, "opt.v." + e.name);
      ckpt.optimizer.m.emplace_back(m.values().begin(), m.values().end());
      ckpt.optimizer.v.emplace_back(v.values().begin(), v.values().end());
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Training

LossBreakdown RecordingLoss(const Model& model, const Tensor& features,
                            const ActivityMatrix& labels, const LossWeights& weights,
                            const RunContext& ctx, std::uint64_t shuffle_seed) {
  ForwardOptions fw;
  fw.mode = ForwardOptions::Mode::kTrain;
  fw.num_speakers = labels.speakers();
  fw.shuffle_seed = shuffle_seed;
  ModelOutput out = model.Forward(features, fw, ctx);
  std::vector<LayerLossInput> layers;
  for (const LayerPrediction& p : out.intermediate) {
    layers.push_back({p.posteriors, p.attractors.existence_logits});
  }
  return total_loss(out.posteriors, out.attractors.existence_logits, layers, labels.ToTensor(),
                    weights);
}

double EvaluateDer(const Model& model, const std::vector<Recording>& recordings,
                   const FeatureNorm& norm, double threshold, std::size_t median_window) {
  ErrorCounts total;
  for (const Recording& r : recordings) {
    const Diarization d = diarize(model, norm.Apply(r.features), {});
    total += ScoreCounts(r.labels, binarize(d.final, threshold, median_window));
  }
  return DiarizationScore::FromCounts(total).der;
}

namespace {

struct Chunk {
  std::size_t recording;
  std::size_t start;
  std::size_t length;
};

Tensor ScrambleDims(const Tensor& x, std::uint64_t seed) {
  auto rng = MakeRng(seed);
  std::vector<std::size_t> perm(x.cols());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> sign(x.cols());
  for (double& v : sign) v = (rng() & 1) != 0 ? 1.0 : -1.0;
  Tensor out = Tensor::Zeros({x.rows(), x.cols()});
  auto dst = out.mutable_values();
  const auto src = x.values();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dst[r * x.cols() + c] = sign[c] * src[r * x.cols() + perm[c]];
    }
  }
  return out;
}

double ValidationLoss(const Model& model, const std::vector<Recording>& valid,
                      const LossWeights& weights, std::uint64_t seed) {
  if (valid.empty()) return 0.0;
  double total = 0.0;
  const RunContext ctx;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    const ActivityMatrix labels = valid[i].labels.WithoutSilentSpeakers();
    total += RecordingLoss(model, valid[i].features, labels, weights, ctx, DeriveSeed(seed, i))
                 .total.item();
  }
  return total / static_cast<double>(valid.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainOptions& options) {
  cfg.Validate();
  RetainFreedMemory();
  std::vector<Recording> train_set = LoadSplit(options.corpus / "train");
  std::vector<Recording> valid_set;
  if (fs::exists(options.corpus / "valid" / "manifest.jsonl")) {
    valid_set = LoadSplit(options.corpus / "valid");
  }
  if (train_set.empty()) throw TrainingError("training split is empty");

  const bool attribute = DescribeVariant(cfg.variant).eda == EdaKind::kAttribute;
  for (const Recording& r : train_set) {
    if (attribute && cfg.attributes <= r.labels.speakers()) {
      throw TrainingError("recording " + r.id + " has S = " + std::to_string(r.labels.speakers()) +
                          " but attribute count N = " + std::to_string(cfg.attributes) +
                          " must exceed it");
    }
    if (r.labels.speakers() + 1 > cfg.max_attractors) {
      throw TrainingError("recording " + r.id + " needs more attractor slots than max_attractors");
    }
  }

  std::optional<Checkpoint> resumed;
  if (options.resume) resumed.emplace(LoadCheckpoint(*options.resume, cfg.variant));
  FeatureNorm norm = resumed ? resumed->norm : LoadCorpusNorm(options.corpus);
  if (norm.empty()) {
    std::vector<Tensor> feats;
    for (const Recording& r : train_set) feats.push_back(r.features);
    norm = FeatureNorm::Fit(feats);
  }
  for (Recording& r : train_set) r.features = norm.Apply(r.features);
  for (Recording& r : valid_set) r.features = norm.Apply(r.features);

  const std::size_t input_dim = train_set.front().features.cols();
  Model model = resumed ? std::move(resumed->model) : Model(cfg.MakeModelConfig(input_dim));
  AdamWState opt_state = resumed ? resumed->optimizer : AdamWState{};
  const std::size_t start_epoch = resumed ? resumed->epoch : 0;
  TrainResult result;
  result.best_valid_loss =
      resumed && start_epoch > 0 ? resumed->best_valid_loss : std::numeric_limits<double>::infinity();
  resumed.reset();

  fs::create_directories(options.out);
  std::ofstream log(options.out / "train.log", start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log) throw TrainingError("cannot open " + (options.out / "train.log").string());
  WriteFileAtomic(options.out / "train.cfg", cfg.ToKeyValue());

  std::vector<Tensor> params = model.params().Tensors();
  const LossWeights weights{cfg.alpha, cfg.beta};
  const AdamWOptions adam{cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
  const std::uint64_t valid_seed = DeriveSeed(cfg.seed, "valid");

  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = DeriveSeed(DeriveSeed(cfg.seed, "epoch"), epoch);
    auto rng = MakeRng(epoch_seed);
    std::vector<Chunk> chunks;
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      const std::size_t frames = train_set[i].labels.frames();
      const std::size_t length = std::min(frames, cfg.chunk_frames);
      const std::size_t start =
          frames > length ? std::uniform_int_distribution<std::size_t>(0, frames - length)(rng) : 0;
      chunks.push_back({i, start, length});
    }
    std::shuffle(chunks.begin(), chunks.end(), rng);

    EpochLog entry;
    entry.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b * cfg.batch_size < chunks.size(); ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(chunks.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      zero_grads(params);
      for (std::size_t k = begin; k < end; ++k) {
        const Chunk& c = chunks[k];
        const Recording& rec = train_set[c.recording];
        Tensor feats = c.length == rec.features.rows()
                           ? rec.features
                           : slice_rows(rec.features, c.start, c.length);
        if (cfg.augment_dims) {
          feats = ScrambleDims(feats, DeriveSeed(epoch_seed, DeriveSeed(c.recording, "augment")));
        }
        const ActivityMatrix labels =
            rec.labels.SliceFrames(c.start, c.length).WithoutSilentSpeakers();
        auto drop_rng = MakeRng(DeriveSeed(epoch_seed, DeriveSeed(c.recording, "dropout")));
        const RunContext ctx{true, cfg.dropout, &drop_rng};
        Tape tape;
        LossBreakdown loss = RecordingLoss(model, feats, labels, weights, ctx,
                                           DeriveSeed(epoch_seed, c.recording));
        const double value = loss.total.item();
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(b) + " (recording " + rec.id + ", chunk start " +
                              std::to_string(c.start) + ")");
        }
        tape.Backward(scale(loss.total, inv_batch));
        loss_sum += value;
      }
      clip_grad_norm(params, cfg.grad_clip);
      const double warm =
          cfg.warmup_steps == 0
              ? 1.0
              : std::min(1.0, static_cast<double>(opt_state.step + 1) /
                                  static_cast<double>(cfg.warmup_steps));
      adamw_step(params, opt_state, cfg.lr * warm, adam);
      for (Tensor& p : params) round_to_fp32(p);
      round_to_fp32(opt_state);
      ++entry.steps;
    }
    zero_grads(params);
    entry.train_loss = loss_sum / static_cast<double>(chunks.size());

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      const double vloss = ValidationLoss(model, valid_set, weights, valid_seed);
      entry.valid_loss = vloss;
      if (!valid_set.empty()) {
        entry.valid_der = EvaluateDer(model, valid_set, FeatureNorm{}, cfg.threshold,
                                      cfg.median_window);
      }
      result.final_valid_loss = vloss;
      if (vloss < result.best_valid_loss) {
        result.best_valid_loss = vloss;
        result.best_epoch = epoch;
        SaveCheckpoint(options.out / "best.ckpt", model, norm, epoch, &opt_state, vloss);
      }
    }
    log << entry.ToJson() << '\n' << std::flush;
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
  }
  SaveCheckpoint(options.out / "final.ckpt", model, norm, std::max(cfg.epochs, start_epoch),
                 &opt_state, result.best_valid_loss);
  if (!fs::exists(options.out / "best.ckpt")) {
    fs::copy_file(options.out / "final.ckpt", options.out / "best.ckpt",
                  fs::copy_options::overwrite_existing);
  }
  result.total_steps = opt_state.step;
  return result;
}

}  // namespace eend

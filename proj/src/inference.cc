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

#include "eend/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace eend {

bool prune_for_inference(Model& model, std::string* notice) {
  if (model.PruneForInference()) return true;
  if (notice != nullptr) {
    *notice = model.pruned() ? "model already pruned"
                             : "variant " + std::to_string(model.variant().id) +
                                   " has no removable intermediate speaker heads; not pruned";
  }
  return false;
}

Diarization diarize(const Model& model, const Tensor& features, const DiarizeOptions& options) {
  if (features.rows() == 0 || features.numel() == 0) {
    throw std::invalid_argument("diarize: empty input (T = 0)");
  }
  ForwardOptions fw;
  fw.mode = ForwardOptions::Mode::kInfer;
  fw.per_layer = options.per_layer;
  fw.threshold = options.threshold;
  fw.shuffle_seed = options.shuffle_seed;
  const RunContext ctx;
  ModelOutput out = model.Forward(features, fw, ctx);
  Diarization result;
  result.final.posteriors = out.posteriors;
  result.shuffle_seed = options.shuffle_seed;
  if (options.per_layer) {
    for (const LayerPrediction& layer : out.intermediate) {
      result.layers.push_back({layer.posteriors, kFrameSeconds});
    }
    result.layers.push_back(result.final);
  }
  return result;
}

ActivityMatrix binarize(const PosteriorMatrix& posteriors, double threshold,
                        std::size_t median_window) {
  if (median_window == 0 || median_window % 2 == 0) {
    throw std::invalid_argument("median window must be odd and >= 1");
  }
  const std::size_t speakers = posteriors.speakers(), frames = posteriors.frames();
  ActivityMatrix raw(speakers, frames);
  for (std::size_t s = 0; s < speakers; ++s)
    for (std::size_t t = 0; t < frames; ++t)
      raw.set(s, t, posteriors.posteriors.at(s, t) > threshold);
  if (median_window == 1) return raw;
  const std::size_t half = median_window / 2;
  ActivityMatrix out(speakers, frames);
  for (std::size_t s = 0; s < speakers; ++s) {
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t lo = t >= half ? t - half : 0;
      const std::size_t hi = std::min(frames, t + half + 1);
      std::size_t on = 0;
      for (std::size_t k = lo; k < hi; ++k) on += raw.at(s, k);
      // Median of a binary window: majority, ties (even edge windows) keep the
      // centre value.
      const std::size_t n = hi - lo;
      out.set(s, t, 2 * on > n || (2 * on == n && raw.at(s, t)));
    }
  }
  return out;
}

std::vector<Segment> ToSegments(const ActivityMatrix& activity, double frame_duration) {
  std::vector<Segment> segments;
  for (std::size_t s = 0; s < activity.speakers(); ++s) {
    std::size_t t = 0;
    while (t < activity.frames()) {
      if (!activity.at(s, t)) {
        ++t;
        continue;
      }
      const std::size_t begin = t;
      while (t < activity.frames() && activity.at(s, t)) ++t;
      segments.push_back({s, static_cast<double>(begin) * frame_duration,
                          static_cast<double>(t) * frame_duration});
    }
  }
  return segments;
}

std::string to_rttm(const ActivityMatrix& activity, const std::string& recording_id,
                    double frame_duration) {
  std::string out;
  char line[256];
  for (const Segment& seg : ToSegments(activity, frame_duration)) {
    std::snprintf(line, sizeof(line), "SPEAKER %s 1 %.3f %.3f <NA> <NA> spk%zu <NA> <NA>\n",
                  recording_id.c_str(), seg.start, seg.end - seg.start, seg.speaker);
    out += line;
  }
  return out;
}

std::map<std::string, RttmRecording> ParseRttm(const std::string& text) {
  std::map<std::string, RttmRecording> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string type, id, channel, onset, duration, ortho, stype, name;
    if (!(fields >> type)) continue;
    if (type != "SPEAKER") continue;
    if (!(fields >> id >> channel >> onset >> duration >> ortho >> stype >> name)) {
      throw std::runtime_error("RTTM line " + std::to_string(lineno) + ": too few fields");
    }
    RttmRecording& rec = out[id];
    auto it = std::find(rec.speakers.begin(), rec.speakers.end(), name);
    std::size_t index = static_cast<std::size_t>(it - rec.speakers.begin());
    if (it == rec.speakers.end()) {
      rec.speakers.push_back(name);
      rec.turns.emplace_back();
    }
    try {
      rec.turns[index].push_back({std::stod(onset), std::stod(duration)});
    } catch (const std::exception&) {
      throw std::runtime_error("RTTM line " + std::to_string(lineno) + ": bad onset/duration");
    }
  }
  return out;
}

ActivityMatrix RttmToActivity(const RttmRecording& recording, std::size_t frames,
                              double frame_duration) {
  if (frames == 0) {
    double end = 0.0;
    for (const auto& turns : recording.turns)
      for (const auto& [onset, dur] : turns) end = std::max(end, onset + dur);
    frames = static_cast<std::size_t>(std::llround(end / frame_duration));
  }
  ActivityMatrix out(recording.speakers.size(), frames);
  for (std::size_t s = 0; s < recording.turns.size(); ++s) {
    for (const auto& [onset, dur] : recording.turns[s]) {
      const double begin = onset / frame_duration;
      const double end = (onset + dur) / frame_duration;
      for (std::size_t t = 0; t < frames; ++t) {
        const double centre = static_cast<double>(t) + 0.5;
        if (centre > begin && centre < end) out.set(s, t, true);
      }
    }
  }
  return out;
}

}  // namespace eend

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

#ifndef EEND_INFERENCE_HPP_
#define EEND_INFERENCE_HPP_

#include <map>
#include <string>
#include <vector>

#include "eend/activity.hpp"
#include "eend/model.hpp"

namespace eend {

inline constexpr double kFrameSeconds = 0.1;

struct PosteriorMatrix {
  Tensor posteriors;  // S x T, entries in (0, 1)
  double frame_duration = kFrameSeconds;

  std::size_t speakers() const { return posteriors.rows(); }
  std::size_t frames() const { return posteriors.cols(); }
};

struct DiarizeOptions {
  double threshold = 0.5;  // existence threshold for counting speakers
  bool per_layer = false;
  std::uint64_t shuffle_seed = 0;  // LSTM-EDA frame order; recorded in outputs
};

struct Diarization {
  PosteriorMatrix final;
  // Intermediate layers 1..L-1 followed by the final layer, when requested.
  std::vector<PosteriorMatrix> layers;
  std::uint64_t shuffle_seed = 0;
};

// Returns true if the model was pruned. Non-attribute variants are left alone
// and a notice is written to `notice` when given.
bool prune_for_inference(Model& model, std::string* notice = nullptr);

Diarization diarize(const Model& model, const Tensor& features, const DiarizeOptions& options);

// Threshold, then a per-speaker running median over `median_window` frames
// (odd, >= 1; 1 disables smoothing). Edges use the available frames.
ActivityMatrix binarize(const PosteriorMatrix& posteriors, double threshold = 0.5,
                        std::size_t median_window = 11);

struct Segment {
  std::size_t speaker = 0;
  double start = 0.0;
  double end = 0.0;
};

std::vector<Segment> ToSegments(const ActivityMatrix& activity,
                                double frame_duration = kFrameSeconds);

// NIST RTTM: "SPEAKER <id> 1 <onset> <duration> <NA> <NA> spk<k> <NA> <NA>",
// one line per contiguous active run, ordered by speaker then onset.
std::string to_rttm(const ActivityMatrix& activity, const std::string& recording_id,
                    double frame_duration = kFrameSeconds);

/// Parsed RTTM content for one recording: speaker names in first-seen order.
struct RttmRecording {
  std::vector<std::string> speakers;
  std::vector<std::vector<std::pair<double, double>>> turns;  // per speaker (onset, duration)
};

std::map<std::string, RttmRecording> ParseRttm(const std::string& text);

// Rasterizes turns onto frames of `frame_duration`; frames = 0 sizes to the
// last turn. Frame t is active when its centre lies inside a turn.
ActivityMatrix RttmToActivity(const RttmRecording& recording, std::size_t frames,
                              double frame_duration = kFrameSeconds);

}  // namespace eend

#endif  // EEND_INFERENCE_HPP_

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

#ifndef EEND_METRICS_HPP_
#define EEND_METRICS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "eend/activity.hpp"

namespace eend {

/// Raw frame counts behind a score; summed across recordings before rates are
/// formed.
struct ErrorCounts {
  double ref_speech = 0;    // sum over scored frames of the reference speaker count
  double missed = 0;        // speaker-frames
  double false_alarm = 0;   // speaker-frames
  double confusion = 0;     // speaker-frames
  double ref_active = 0;    // frames with any reference speaker
  double sad_missed = 0;    // frames: ref active, hyp silent
  double sad_false_alarm = 0;  // frames: ref silent, hyp active

  ErrorCounts& operator+=(const ErrorCounts& o);
};

/// Percentages. der = ms + fa + cf over reference speaker-frames; SAD rates are
/// over reference-active frames.
struct DiarizationScore {
  double der = 0, ms = 0, fa = 0, cf = 0;
  double sad_ms = 0, sad_fa = 0;
  double scored_speech = 0;

  static DiarizationScore FromCounts(const ErrorCounts& counts);
};

// Per reference speaker, the mapped hypothesis speaker or kUnassigned. Maximizes
// total co-active frame overlap (one-to-one). `scored` optionally masks frames.
std::vector<std::size_t> optimal_mapping(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                                         const std::vector<std::uint8_t>* scored = nullptr);

// Frame counts under a fixed mapping.
ErrorCounts CountErrors(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                        const std::vector<std::size_t>& mapping,
                        const std::vector<std::uint8_t>* scored = nullptr);

// Counts under the optimal mapping.
ErrorCounts ScoreCounts(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                        const std::vector<std::uint8_t>* scored = nullptr);

DiarizationScore der(const ActivityMatrix& ref, const ActivityMatrix& hyp);
std::pair<double, double> sad(const ActivityMatrix& ref, const ActivityMatrix& hyp);

// Frames within `collar_frames` of any reference segment boundary are marked
// unscored (0).
std::vector<std::uint8_t> CollarMask(const ActivityMatrix& ref, std::size_t collar_frames);

// Aligned text table with columns DER MS FA CF | SAD MS FA, one row per entry.
std::string FormatScoreTable(const std::vector<std::pair<std::string, DiarizationScore>>& rows,
                             const std::string& label_header = "System");
// One JSON object per line.
std::string FormatScoreRecords(const std::vector<std::pair<std::string, DiarizationScore>>& rows);

}  // namespace eend

#endif  // EEND_METRICS_HPP_

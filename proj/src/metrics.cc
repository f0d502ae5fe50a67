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

#include "eend/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "eend/assignment.hpp"

namespace eend {

namespace {

void CheckFrames(const ActivityMatrix& ref, const ActivityMatrix& hyp) {
  if (ref.frames() != hyp.frames()) {
    throw DimensionError("scoring needs equal frame counts, got " + std::to_string(ref.frames()) +
                         " and " + std::to_string(hyp.frames()));
  }
}

bool Scored(const std::vector<std::uint8_t>* mask, std::size_t t) {
  return mask == nullptr || (*mask)[t] != 0;
}

}  // namespace

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  ref_speech += o.ref_speech;
  missed += o.missed;
  false_alarm += o.false_alarm;
  confusion += o.confusion;
  ref_active += o.ref_active;
  sad_missed += o.sad_missed;
  sad_false_alarm += o.sad_false_alarm;
  return *this;
}

DiarizationScore DiarizationScore::FromCounts(const ErrorCounts& c) {
  DiarizationScore s;
  s.scored_speech = c.ref_speech;
  if (c.ref_speech > 0) {
    s.ms = 100.0 * c.missed / c.ref_speech;
    s.fa = 100.0 * c.false_alarm / c.ref_speech;
    s.cf = 100.0 * c.confusion / c.ref_speech;
    s.der = 100.0 * (c.missed + c.false_alarm + c.confusion) / c.ref_speech;
  }
  if (c.ref_active > 0) {
    s.sad_ms = 100.0 * c.sad_missed / c.ref_active;
    s.sad_fa = 100.0 * c.sad_false_alarm / c.ref_active;
  }
  return s;
}

std::vector<std::size_t> optimal_mapping(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                                         const std::vector<std::uint8_t>* scored) {
  CheckFrames(ref, hyp);
  const std::size_t r = ref.speakers(), h = hyp.speakers();
  std::vector<double> cost(r * h, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      double overlap = 0.0;
      for (std::size_t t = 0; t < ref.frames(); ++t) {
        if (Scored(scored, t) && ref.at(i, t) && hyp.at(j, t)) overlap += 1.0;
      }
      cost[i * h + j] = -overlap;
    }
  }
  return SolveAssignment(cost, r, h);
}

ErrorCounts CountErrors(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                        const std::vector<std::size_t>& mapping,
                        const std::vector<std::uint8_t>* scored) {
  CheckFrames(ref, hyp);
  ErrorCounts c;
  for (std::size_t t = 0; t < ref.frames(); ++t) {
    if (!Scored(scored, t)) continue;
    const std::size_t n_ref = ref.ActiveCount(t);
    const std::size_t n_hyp = hyp.ActiveCount(t);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ref.speakers(); ++i) {
      const std::size_t j = mapping[i];
      if (j != kUnassigned && ref.at(i, t) && hyp.at(j, t)) ++correct;
    }
    c.ref_speech += static_cast<double>(n_ref);
    if (n_ref > n_hyp) c.missed += static_cast<double>(n_ref - n_hyp);
    if (n_hyp > n_ref) c.false_alarm += static_cast<double>(n_hyp - n_ref);
    c.confusion += static_cast<double>(std::min(n_ref, n_hyp) - correct);
    if (n_ref > 0) c.ref_active += 1;
    if (n_ref > 0 && n_hyp == 0) c.sad_missed += 1;
    if (n_ref == 0 && n_hyp > 0) c.sad_false_alarm += 1;
  }
  return c;
}

ErrorCounts ScoreCounts(const ActivityMatrix& ref, const ActivityMatrix& hyp,
                        const std::vector<std::uint8_t>* scored) {
  return CountErrors(ref, hyp, optimal_mapping(ref, hyp, scored), scored);
}

DiarizationScore der(const ActivityMatrix& ref, const ActivityMatrix& hyp) {
  return DiarizationScore::FromCounts(ScoreCounts(ref, hyp));
}

std::pair<double, double> sad(const ActivityMatrix& ref, const ActivityMatrix& hyp) {
  const DiarizationScore s = der(ref, hyp);
  return {s.sad_ms, s.sad_fa};
}

std::vector<std::uint8_t> CollarMask(const ActivityMatrix& ref, std::size_t collar_frames) {
  std::vector<std::uint8_t> mask(ref.frames(), 1);
  if (collar_frames == 0) return mask;
  const std::size_t n = ref.frames();
  auto blank = [&](std::size_t boundary) {
    // A boundary sits between frames boundary-1 and boundary.
    const std::size_t lo = boundary >= collar_frames ? boundary - collar_frames : 0;
    const std::size_t hi = std::min(n, boundary + collar_frames);
    for (std::size_t t = lo; t < hi; ++t) mask[t] = 0;
  };
  for (std::size_t s = 0; s < ref.speakers(); ++s) {
    for (std::size_t t = 0; t <= n; ++t) {
      const bool prev = t > 0 && ref.at(s, t - 1);
      const bool cur = t < n && ref.at(s, t);
      if (prev != cur) blank(t);
    }
  }
  return mask;
}

std::string FormatScoreTable(const std::vector<std::pair<std::string, DiarizationScore>>& rows,
                             const std::string& label_header) {
  std::size_t width = label_header.size();
  for (const auto& [label, _] : rows) width = std::max(width, label.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << label_header << std::right
     << " | " << std::setw(7) << "DER" << std::setw(7) << "MS" << std::setw(7) << "FA"
     << std::setw(7) << "CF" << " | " << std::setw(7) << "SAD MS" << std::setw(7) << "SAD FA"
     << '\n';
  os << std::string(width, '-') << "-+-" << std::string(28, '-') << "-+-" << std::string(14, '-')
     << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& [label, s] : rows) {
    os << std::left << std::setw(static_cast<int>(width)) << label << std::right << " | "
       << std::setw(7) << s.der << std::setw(7) << s.ms << std::setw(7) << s.fa << std::setw(7)
       << s.cf << " | " << std::setw(7) << s.sad_ms << std::setw(7) << s.sad_fa << '\n';
  }
  return os.str();
}

std::string FormatScoreRecords(const std::vector<std::pair<std::string, DiarizationScore>>& rows) {
  std::string out;
  for (const auto& [label, s] : rows) {
    nlohmann::json j = {{"system", label}, {"DER", s.der},        {"MS", s.ms},
                        {"FA", s.fa},      {"CF", s.cf},          {"SAD_MS", s.sad_ms},
                        {"SAD_FA", s.sad_fa}, {"scored_speech", s.scored_speech}};
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace eend

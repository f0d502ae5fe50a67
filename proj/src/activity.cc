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

#include "eend/activity.hpp"

#include <algorithm>
#include <stdexcept>

namespace eend {

ActivityMatrix::ActivityMatrix(std::size_t speakers, std::size_t frames,
                               std::vector<std::uint8_t> data)
    : speakers_(speakers), frames_(frames), data_(std::move(data)) {
  if (data_.size() != speakers * frames) {
    throw DimensionError("activity data holds " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(speakers * frames));
  }
  for (auto& v : data_) {
    if (v > 1) throw std::invalid_argument("activity entries must be 0 or 1");
  }
}

std::size_t ActivityMatrix::ActiveCount(std::size_t t) const {
  std::size_t n = 0;
  for (std::size_t s = 0; s < speakers_; ++s) n += at(s, t);
  return n;
}

std::size_t ActivityMatrix::ActiveFrames(std::size_t s) const {
  auto r = row(s);
  return static_cast<std::size_t>(std::count(r.begin(), r.end(), std::uint8_t{1}));
}

ActivityMatrix ActivityMatrix::SliceFrames(std::size_t begin, std::size_t count) const {
  if (begin + count > frames_) throw DimensionError("SliceFrames out of range");
  ActivityMatrix out(speakers_, count);
  for (std::size_t s = 0; s < speakers_; ++s)
    for (std::size_t t = 0; t < count; ++t) out.set(s, t, at(s, begin + t));
  return out;
}

ActivityMatrix ActivityMatrix::SelectSpeakers(std::span<const std::size_t> rows) const {
  ActivityMatrix out(rows.size(), frames_);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t t = 0; t < frames_; ++t) out.set(i, t, at(rows[i], t));
  return out;
}

ActivityMatrix ActivityMatrix::WithoutSilentSpeakers() const {
  std::vector<std::size_t> keep;
  for (std::size_t s = 0; s < speakers_; ++s) {
    if (ActiveFrames(s) > 0) keep.push_back(s);
  }
  return SelectSpeakers(keep);
}

Tensor ActivityMatrix::ToTensor() const {
  std::vector<double> values(data_.begin(), data_.end());
  return Tensor::FromValues({speakers_, frames_}, std::move(values));
}

}  // namespace eend

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

#ifndef EEND_ACTIVITY_HPP_
#define EEND_ACTIVITY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eend/tensor.hpp"

namespace eend {

/// Binary speaker activity, speakers x frames, row-major.
class ActivityMatrix {
 public:
  ActivityMatrix() = default;
  ActivityMatrix(std::size_t speakers, std::size_t frames)
      : speakers_(speakers), frames_(frames), data_(speakers * frames, 0) {}
  ActivityMatrix(std::size_t speakers, std::size_t frames, std::vector<std::uint8_t> data);

  std::size_t speakers() const { return speakers_; }
  std::size_t frames() const { return frames_; }
  std::uint8_t at(std::size_t s, std::size_t t) const { return data_[s * frames_ + t]; }
  void set(std::size_t s, std::size_t t, bool active) { data_[s * frames_ + t] = active ? 1 : 0; }
  std::span<const std::uint8_t> row(std::size_t s) const {
    return std::span<const std::uint8_t>(data_).subspan(s * frames_, frames_);
  }
  const std::vector<std::uint8_t>& data() const { return data_; }

  // Number of active speakers in frame t.
  std::size_t ActiveCount(std::size_t t) const;
  std::size_t ActiveFrames(std::size_t s) const;

  ActivityMatrix SliceFrames(std::size_t begin, std::size_t count) const;
  ActivityMatrix SelectSpeakers(std::span<const std::size_t> rows) const;
  ActivityMatrix WithoutSilentSpeakers() const;
  Tensor ToTensor() const;

  bool operator==(const ActivityMatrix&) const = default;

 private:
  std::size_t speakers_ = 0;
  std::size_t frames_ = 0;
  std::vector<std::uint8_t> data_;
};

}  // namespace eend

#endif  // EEND_ACTIVITY_HPP_

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

#ifndef EEND_RNG_HPP_
#define EEND_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace eend {

// SplitMix64 finalizer; used to derive independent streams from one seed.
constexpr std::uint64_t MixSeed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t label) {
  return MixSeed(base ^ MixSeed(label));
}

// FNV-1a, so streams can be labelled by name ("datagen", "init", ...).
constexpr std::uint64_t HashLabel(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t DeriveSeed(std::uint64_t base, std::string_view label) {
  return DeriveSeed(base, HashLabel(label));
}

inline std::mt19937_64 MakeRng(std::uint64_t seed) { return std::mt19937_64(MixSeed(seed)); }

}  // namespace eend

#endif  // EEND_RNG_HPP_

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

#ifndef EEND_CONFIG_HPP_
#define EEND_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace eend {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat "key = value" text. Blank lines and lines starting with '#' are
/// ignored. Every key must be consumed by a typed getter; Finish() reports the
/// ones nobody asked for.
class KeyValueConfig {
 public:
  static KeyValueConfig Parse(const std::string& text);
  static KeyValueConfig Load(const std::filesystem::path& path);

  bool Has(const std::string& key) const { return values_.count(key) != 0; }
  void Set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string GetString(const std::string& key, const std::string& fallback);
  double GetDouble(const std::string& key, double fallback);
  std::int64_t GetInt(const std::string& key, std::int64_t fallback);
  std::uint64_t GetUint(const std::string& key, std::uint64_t fallback);
  bool GetBool(const std::string& key, bool fallback);
  std::vector<std::size_t> GetSizeList(const std::string& key,
                                       const std::vector<std::size_t>& fallback);

  // Throws if any key was never read.
  void Finish() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

}  // namespace eend

#endif  // EEND_CONFIG_HPP_

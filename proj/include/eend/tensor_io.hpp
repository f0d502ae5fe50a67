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

#ifndef EEND_TENSOR_IO_HPP_
#define EEND_TENSOR_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "eend/tensor.hpp"

namespace eend {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr char kTensorFileMagic[4] = {'A', 'E', 'N', 'D'};
inline constexpr std::uint32_t kTensorFileVersion = 1;

// Named-tensor flat binary: "AEND", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rank, u64 dims, fp32 values. All integers
// and floats little-endian. The file is written to a temporary sibling and
// renamed into place.
void WriteTensorFile(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> ReadTensorFile(const std::filesystem::path& path);

// In-memory variants used by the file functions.
std::string EncodeTensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> DecodeTensors(const std::string& bytes);

const Tensor& FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name);
const Tensor* FindTensorOrNull(const std::vector<NamedTensor>& tensors, const std::string& name);

// Writes `contents` to `path` via write-temp-then-rename.
void WriteFileAtomic(const std::filesystem::path& path, const std::string& contents);
std::string ReadFileBytes(const std::filesystem::path& path);

}  // namespace eend

#endif  // EEND_TENSOR_IO_HPP_

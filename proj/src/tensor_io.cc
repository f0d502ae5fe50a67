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

#include "eend/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace eend {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need byte swapping");

template <typename T>
void Put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw FormatError(std::string("tensor file truncated while reading ") + what);
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string GetString(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("tensor file truncated while reading name");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string EncodeTensors(const std::vector<NamedTensor>& tensors) {
  std::string out;
  out.append(kTensorFileMagic, 4);
  Put<std::uint32_t>(out, kTensorFileVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, tensor] : tensors) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) Put<std::uint64_t>(out, d);
    for (double v : tensor.values()) Put<float>(out, static_cast<float>(v));
  }
  return out;
}

std::vector<NamedTensor> DecodeTensors(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kTensorFileMagic, 4) != 0) {
    throw FormatError("not a tensor file: bad magic bytes");
  }
  Reader in(bytes);
  in.GetString(4);
  const auto version = in.Get<std::uint32_t>("version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(version));
  }
  const auto count = in.Get<std::uint32_t>("count");
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.Get<std::uint32_t>("name length");
    std::string name = in.GetString(name_len);
    const auto rank = in.Get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.Get<std::uint64_t>("dims"));
    std::vector<double> values(NumElements(shape));
    for (double& v : values) v = static_cast<double>(in.Get<float>("values"));
    tensors.push_back({std::move(name), Tensor::FromValues(std::move(shape), std::move(values))});
  }
  if (!in.done()) throw FormatError("trailing bytes after last tensor");
  return tensors;
}

void WriteFileAtomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteTensorFile(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  WriteFileAtomic(path, EncodeTensors(tensors));
}

std::vector<NamedTensor> ReadTensorFile(const std::filesystem::path& path) {
  try {
    return DecodeTensors(ReadFileBytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const Tensor* FindTensorOrNull(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors) {
    if (nt.name == name) return &nt.tensor;
  }
  return nullptr;
}

const Tensor& FindTensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  const Tensor* t = FindTensorOrNull(tensors, name);
  if (t == nullptr) throw FormatError("tensor '" + name + "' missing from file");
  return *t;
}

}  // namespace eend

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "eend/rng.hpp"
#include "eend/tensor_io.hpp"
#include "support/oracles.hpp"

using namespace eend;
namespace fs = std::filesystem;

namespace {

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("eend_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("encoded bytes follow the documented layout") {
  const std::string bytes =
      EncodeTensors({{"ab", Tensor::FromValues({2}, {1.0, -2.0})}});
  // magic, version 1, count 1, name length 2, "ab", rank 1, dim 2, two floats
  std::string expect = "AEND";
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) expect.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) expect.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  u32(1);
  u32(1);
  u32(2);
  expect += "ab";
  u32(1);
  u64(2);
  u32(0x3f800000);  // 1.0f
  u32(0xc0000000);  // -2.0f
  CHECK(bytes == expect);
}

TEST_CASE("round trip is bitwise for fp32-representable values") {
  auto rng = MakeRng(3);
  Tensor a = testing::RandomTensor({4, 5}, rng, 1.0, false);
  for (double& v : a.mutable_values()) v = static_cast<float>(v);
  Tensor b = Tensor::FromValues({3}, {0.0, -0.0, 1e-30});
  Tensor c = Tensor::Scalar(42.0);
  const fs::path dir = TempDir("roundtrip");
  WriteTensorFile(dir / "t.bin", {{"a", a}, {"b.c", b}, {"scalar", c}});
  CHECK(!fs::exists(dir / "t.bin.tmp"));
  const auto back = ReadTensorFile(dir / "t.bin");
  REQUIRE(back.size() == 3);
  CHECK(back[0].name == "a");
  CHECK(back[0].tensor.shape() == a.shape());
  CHECK(std::memcmp(back[0].tensor.values().data(), a.values().data(), a.numel() * 8) == 0);
  CHECK(FindTensor(back, "b.c").values()[2] == static_cast<double>(1e-30f));
  CHECK(FindTensor(back, "scalar").item() == 42.0);
  CHECK(FindTensorOrNull(back, "missing") == nullptr);
  CHECK_THROWS_AS(FindTensor(back, "missing"), FormatError);
}

TEST_CASE("corrupted files are format errors") {
  const std::string good = EncodeTensors({{"x", Tensor::FromValues({2}, {1.0, 2.0})}});
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(DecodeTensors(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_WITH_AS(DecodeTensors(bad_version), doctest::Contains("version"), FormatError);
  CHECK_THROWS_AS(DecodeTensors(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(DecodeTensors(good.substr(0, 6)), FormatError);
  CHECK_THROWS_AS(DecodeTensors(good + "z"), FormatError);
  CHECK_THROWS(ReadTensorFile("/nonexistent/eend/file.bin"));
}

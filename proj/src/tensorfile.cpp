// Copyright 2026 The sedlab Authors
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

#include "sedlab/tensorfile.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "sedlab/bytesio.hpp"

namespace sedlab {

namespace {

constexpr std::uint32_t kTensorMagic = 0x46544c53u;  // "SLTF" little-endian
constexpr std::uint32_t kTensorVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;
constexpr std::uint32_t kMaxRank = 8;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("tensor file error for '" + path + "': " + what);
}

}  // namespace

void write_tensor_f32(const std::string& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  write_u32le(out, kTensorMagic);
  write_u32le(out, kTensorVersion);
  write_u32le(out, kDtypeF32);
  write_u32le(out, static_cast<std::uint32_t>(t.rank()));
  for (Index d = 0; d < t.rank(); ++d) {
    write_u64le(out, static_cast<std::uint64_t>(t.dim(d)));
  }
  for (Index i = 0; i < t.numel(); ++i) write_f32le(out, t[i]);
  out.flush();
  if (!out) fail(path, "write failed");
}

Tensor<float> read_tensor_f32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  if (read_u32le(in) != kTensorMagic) fail(path, "bad magic, not a tensor file");
  const std::uint32_t version = read_u32le(in);
  if (version != kTensorVersion) {
    fail(path, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t dtype = read_u32le(in);
  if (dtype != kDtypeF32) fail(path, "unsupported dtype tag " + std::to_string(dtype));
  const std::uint32_t rank = read_u32le(in);
  if (!in) fail(path, "truncated header");
  if (rank == 0 || rank > kMaxRank) fail(path, "invalid rank " + std::to_string(rank));
  std::vector<Index> dims(rank);
  Index total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t d = read_u64le(in);
    if (!in || d == 0 || d > (1ull << 32)) fail(path, "invalid dimension");
    dims[i] = static_cast<Index>(d);
    total *= dims[i];
  }
  Tensor<float> t(dims);
  for (Index i = 0; i < total; ++i) t[i] = read_f32le(in);
  if (!in) fail(path, "truncated payload");
  char extra;
  in.read(&extra, 1);
  if (!in.eof()) fail(path, "trailing bytes after payload");
  return t;
}

}  // namespace sedlab

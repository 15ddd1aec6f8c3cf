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

#include "sedlab/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "sedlab/bytesio.hpp"
#include "sedlab/rng.hpp"

namespace sedlab {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4b434c53u;  // "SLCK" little-endian
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxTensors = 4096;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint error for '" + path + "': " + what);
}

}  // namespace

std::uint64_t config_fingerprint(const ModelConfig& cfg, Index frames) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "classes=%lld;mel=%lld;channels=%lld,%lld,%lld;eps=%.17g;frames=%lld",
                static_cast<long long>(cfg.classes), static_cast<long long>(cfg.mel_bins),
                static_cast<long long>(cfg.channels[0]), static_cast<long long>(cfg.channels[1]),
                static_cast<long long>(cfg.channels[2]), cfg.standardize_eps,
                static_cast<long long>(frames));
  return hash_tag(buf);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(tmp, "cannot open for writing");
    write_u32le(out, kCheckpointMagic);
    write_u32le(out, kCheckpointVersion);
    write_u64le(out, ck.fingerprint);
    write_u64le(out, ck.epochs_done);
    write_u64le(out, ck.optimizer_steps);
    write_u32le(out, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, tensor] : ck.tensors) {
      write_u32le(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32le(out, static_cast<std::uint32_t>(tensor.rank()));
      for (Index d = 0; d < tensor.rank(); ++d) {
        write_u64le(out, static_cast<std::uint64_t>(tensor.dim(static_cast<int>(d))));
      }
      for (Index i = 0; i < tensor.numel(); ++i) write_f32le(out, tensor[i]);
    }
    out.flush();
    if (!out) fail(tmp, "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(path, "rename failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  if (read_u32le(in) != kCheckpointMagic) fail(path, "bad magic, not a checkpoint");
  const std::uint32_t version = read_u32le(in);
  if (version != kCheckpointVersion) fail(path, "unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.fingerprint = read_u64le(in);
  ck.epochs_done = read_u64le(in);
  ck.optimizer_steps = read_u64le(in);
  const std::uint32_t count = read_u32le(in);
  if (!in) fail(path, "truncated header");
  if (count > kMaxTensors) fail(path, "implausible tensor count");
  ck.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32le(in);
    if (!in || name_len == 0 || name_len > 256) fail(path, "invalid tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = read_u32le(in);
    if (!in || rank == 0 || rank > kMaxRank) fail(path, "invalid tensor rank");
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint64_t dim = read_u64le(in);
      if (!in || dim == 0 || dim > (1ull << 32)) fail(path, "invalid tensor dimension");
      shape[d] = static_cast<Index>(dim);
    }
    Tensor<float> tensor(shape);
    for (Index e = 0; e < tensor.numel(); ++e) tensor[e] = read_f32le(in);
    if (!in) fail(path, "truncated tensor payload");
    ck.tensors.emplace_back(std::move(name), std::move(tensor));
  }
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_fingerprint) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.fingerprint != expected_fingerprint) {
    fail(path, "config fingerprint mismatch: checkpoint has " + std::to_string(ck.fingerprint) +
                   ", requesting config has " + std::to_string(expected_fingerprint) +
                   "; refusing to load");
  }
  return ck;
}

}  // namespace sedlab

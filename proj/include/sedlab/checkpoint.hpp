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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sedlab/model.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

// Training state container: "SLCK" magic, version, a fingerprint of the
// architecture-defining configuration, epoch and optimizer step
// counters, then named f32 tensors (model parameters, optimizer moments
// and the context pool rows). Loading refuses a checkpoint whose
// fingerprint does not match the requesting configuration.

struct Checkpoint {
  std::uint64_t fingerprint = 0;
  std::uint64_t epochs_done = 0;
  std::uint64_t optimizer_steps = 0;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& kv : tensors) {
      if (kv.first == name) return &kv.second;
    }
    return nullptr;
  }
};

// Hash of the fields that fix tensor shapes; runs with different
// classes, mel bins or channel widths cannot exchange checkpoints.
std::uint64_t config_fingerprint(const ModelConfig& cfg, Index frames);

// Writes to a temporary sibling and renames, so a crash never leaves a
// half-written checkpoint at the target path.
void save_checkpoint(const std::string& path, const Checkpoint& ck);

Checkpoint load_checkpoint(const std::string& path);

// Loads and verifies the fingerprint, throwing on mismatch.
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_fingerprint);

}  // namespace sedlab

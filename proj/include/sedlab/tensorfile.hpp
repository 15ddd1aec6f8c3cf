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

#include <string>

#include "sedlab/tensor.hpp"

namespace sedlab {

// On-disk tensor container: "SLTF" magic, u32 version, u32 dtype tag,
// u32 rank, u64 dims, then the row-major payload as little-endian f32.
// The format is host-independent; files generated anywhere compare
// byte-for-byte when the contents match.

void write_tensor_f32(const std::string& path, const Tensor<float>& t);

Tensor<float> read_tensor_f32(const std::string& path);

}  // namespace sedlab

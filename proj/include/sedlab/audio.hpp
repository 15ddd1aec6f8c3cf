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
#include <vector>

namespace sedlab {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1)
  int sample_rate = 0;
};

// Reads a PCM16 mono RIFF/WAVE file. Multi-channel, compressed, or non-16-bit
// files are rejected with a descriptive error naming the offending field.
AudioClip read_wav_pcm16_mono(const std::string& path);

}  // namespace sedlab

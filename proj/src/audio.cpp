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

#include "sedlab/audio.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace sedlab {

namespace {

std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[0]) |
                                    (static_cast<std::uint16_t>(b[1]) << 8));
}

std::string read_fourcc(std::istream& in) {
  char c[4];
  in.read(c, 4);
  return std::string(c, 4);
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("WAV read failed for '" + path + "': " + what);
}

}  // namespace

AudioClip read_wav_pcm16_mono(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  if (read_fourcc(in) != "RIFF") fail(path, "missing RIFF header");
  (void)read_u32le(in);  // riff chunk size; trusting the data chunk length instead
  if (read_fourcc(in) != "WAVE") fail(path, "not a WAVE file");

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t sample_rate = 0;
  AudioClip clip;
  while (in && in.peek() != EOF) {
    const std::string id = read_fourcc(in);
    const std::uint32_t size = read_u32le(in);
    if (!in) fail(path, "truncated chunk header");
    if (id == "fmt ") {
      if (size < 16) fail(path, "fmt chunk too small");
      format = read_u16le(in);
      channels = read_u16le(in);
      sample_rate = read_u32le(in);
      (void)read_u32le(in);  // byte rate
      (void)read_u16le(in);  // block align
      bits = read_u16le(in);
      in.ignore(size - 16 + (size % 2));
      have_fmt = true;
      if (format != 1)
        fail(path, "compressed audio (format tag " + std::to_string(format) +
                       "), only PCM (1) is supported");
      if (channels != 1)
        fail(path, "expected mono, got " + std::to_string(channels) + " channels");
      if (bits != 16)
        fail(path, "expected 16-bit samples, got " + std::to_string(bits) + "-bit");
    } else if (id == "data") {
      if (!have_fmt) fail(path, "data chunk before fmt chunk");
      const std::uint32_t count = size / 2;
      clip.samples.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t raw = read_u16le(in);
        clip.samples[i] = static_cast<std::int16_t>(raw) / 32768.0;
      }
      if (!in) fail(path, "truncated data chunk");
      in.ignore(size % 2);
    } else {
      in.ignore(size + (size % 2));  // skip unknown chunks (LIST, fact, ...)
    }
  }
  if (!have_fmt) fail(path, "no fmt chunk found");
  if (clip.samples.empty()) fail(path, "no data chunk or empty audio");
  clip.sample_rate = static_cast<int>(sample_rate);
  if (clip.sample_rate <= 0) fail(path, "nonpositive sample rate");
  return clip;
}

}  // namespace sedlab

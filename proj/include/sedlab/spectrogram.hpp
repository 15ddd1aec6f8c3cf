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

#include <complex>
#include <vector>

#include "sedlab/audio.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

// Log-mel time-frequency matrix, the model input.
struct Spectrogram {
  Tensor<float> values;  // [mel_bins x frames], log energy, >= log(floor)
  double frame_hop_seconds = 0.0;

  Index mel_bins() const { return values.dim(0); }
  Index frames() const { return values.dim(1); }
};

struct FeatureConfig {
  int sample_rate = 16000;
  int win = 1024;  // power of two
  int hop = 320;
  int mel_bins = 64;
};

constexpr double kLogFloor = 1e-10;

// Number of analysis frames for a clip of `len` samples.
Index stft_frame_count(Index len, int win, int hop);

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x);

// Hann-windowed magnitude-squared short-time spectrum, [win/2+1 x frames].
// Rejects clips shorter than one window.
Tensor<double> stft_power(const AudioClip& clip, int win, int hop);

// Triangular mel filterbank on the HTK mel scale, rows normalized to unit
// peak; [mel_bins x fft_bins].
Tensor<double> mel_filterbank(int sample_rate, Index fft_bins, int mel_bins);

// Applies the filterbank per frame, then log(x + 1e-10).
Tensor<double> mel_project(const Tensor<double>& power, int sample_rate, int mel_bins);

// Full front end: WAV samples to log-mel Spectrogram.
Spectrogram compute_log_mel(const AudioClip& clip, const FeatureConfig& cfg);

}  // namespace sedlab

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

#include "sedlab/spectrogram.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sedlab {

namespace {

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Index stft_frame_count(Index len, int win, int hop) {
  if (len < win) return 0;
  return (len - win) / hop + 1;
}

void fft_radix2(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (!is_pow2(static_cast<int>(n)))
    throw std::invalid_argument("fft size must be a power of two, got " +
                                std::to_string(n));
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = x[i + j];
        const std::complex<double> v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

Tensor<double> stft_power(const AudioClip& clip, int win, int hop) {
  if (hop <= 0) throw std::invalid_argument("stft hop must be positive");
  if (!is_pow2(win))
    throw std::invalid_argument("stft window must be a power of two, got " +
                                std::to_string(win));
  const Index len = static_cast<Index>(clip.samples.size());
  if (len < win)
    throw std::invalid_argument("clip shorter than one analysis window: " +
                                std::to_string(len) + " < " + std::to_string(win));
  const Index frames = stft_frame_count(len, win, hop);
  const Index bins = win / 2 + 1;
  std::vector<double> hann(static_cast<std::size_t>(win));
  for (int i = 0; i < win; ++i)
    hann[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / win));

  Tensor<double> power(Shape{bins, frames});
  auto pm = power.mat();
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(win));
  for (Index t = 0; t < frames; ++t) {
    const Index start = t * hop;
    for (int i = 0; i < win; ++i)
      buf[static_cast<std::size_t>(i)] = clip.samples[static_cast<std::size_t>(start + i)] *
                                         hann[static_cast<std::size_t>(i)];
    fft_radix2(buf);
    for (Index b = 0; b < bins; ++b) pm(b, t) = std::norm(buf[static_cast<std::size_t>(b)]);
  }
  return power;
}

Tensor<double> mel_filterbank(int sample_rate, Index fft_bins, int mel_bins) {
  if (mel_bins < 2) throw std::invalid_argument("mel_bins must be >= 2");
  if (mel_bins > fft_bins)
    throw std::invalid_argument("mel_bins " + std::to_string(mel_bins) +
                                " exceeds spectral bins " + std::to_string(fft_bins));
  const int win = static_cast<int>(2 * (fft_bins - 1));
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> hz_points(static_cast<std::size_t>(mel_bins) + 2);
  for (int m = 0; m < mel_bins + 2; ++m)
    hz_points[static_cast<std::size_t>(m)] = mel_to_hz(mel_hi * m / (mel_bins + 1));

  Tensor<double> fb(Shape{static_cast<Index>(mel_bins), fft_bins});
  auto fm = fb.mat();
  for (int m = 0; m < mel_bins; ++m) {
    const double lo = hz_points[static_cast<std::size_t>(m)];
    const double mid = hz_points[static_cast<std::size_t>(m) + 1];
    const double hi = hz_points[static_cast<std::size_t>(m) + 2];
    double peak = 0.0;
    for (Index b = 0; b < fft_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / win;
      double w = 0.0;
      if (f > lo && f < mid)
        w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi)
        w = (hi - f) / (hi - mid);
      fm(m, b) = w;
      peak = std::max(peak, w);
    }
    if (peak > 0.0) {
      fm.row(m) /= peak;
    } else {
      // Triangle narrower than the bin grid: place the filter on the bin
      // nearest its center so every row still has a unit peak.
      const Index b = static_cast<Index>(std::lround(mid * win / sample_rate));
      fm(m, std::min(std::max(b, Index{0}), fft_bins - 1)) = 1.0;
    }
  }
  return fb;
}

Tensor<double> mel_project(const Tensor<double>& power, int sample_rate, int mel_bins) {
  if (power.rank() != 2)
    throw std::invalid_argument("mel_project expects [bins x frames], got " +
                                shape_str(power.shape()));
  const Tensor<double> fb = mel_filterbank(sample_rate, power.dim(0), mel_bins);
  Tensor<double> out(Shape{static_cast<Index>(mel_bins), power.dim(1)});
  out.mat().noalias() = fb.mat() * power.mat();
  out.data() = (out.data() + kLogFloor).log();
  return out;
}

Spectrogram compute_log_mel(const AudioClip& clip, const FeatureConfig& cfg) {
  const Tensor<double> power = stft_power(clip, cfg.win, cfg.hop);
  const Tensor<double> logmel = mel_project(power, cfg.sample_rate, cfg.mel_bins);
  Spectrogram spec;
  spec.values = Tensor<float>::from_cast(logmel);
  spec.frame_hop_seconds = static_cast<double>(cfg.hop) / cfg.sample_rate;
  return spec;
}

}  // namespace sedlab

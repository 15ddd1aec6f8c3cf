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
#include <vector>

#include "sedlab/events.hpp"
#include "sedlab/manifest.hpp"
#include "sedlab/rng.hpp"
#include "sedlab/spectrogram.hpp"

namespace sedlab {

// Synthetic soundscape generator. Clips are drawn from a process with
// two deliberate context effects: classes can be made to co-occur
// (a confounded pair) and a class can be tied to a specific background
// texture. Both effects are controllable, so evaluation sets with the
// correlations removed can be generated from the same class templates.

// Background texture preference of one class: when the class is present
// the clip background is drawn as texture `texture` with probability
// `strength`, otherwise uniformly.
struct BackgroundAssociation {
  int texture = 0;
  double strength = 0.0;
};

struct GeneratorConfig {
  Index classes = 6;
  Index frames = 240;
  Index mel_bins = 64;
  // Frame-to-seconds mapping used when reporting; metrics operate in
  // frames throughout.
  double frames_per_second = 25.0;

  // Co-occurrence matrix [classes x classes], row-major. rho[a][b] is
  // the probability that class b joins a clip whose primary class is a.
  // The diagonal is ignored. Symmetric by construction.
  std::vector<double> rho;
  // Per-class background association; strength 0 means no preference.
  std::vector<BackgroundAssociation> beta;

  Index events_min = 1;
  Index events_max = 3;
  double event_min_frac = 0.10;
  double event_max_frac = 0.30;

  // Rendering powers. Background is a smooth per-texture spectral bump
  // plus a white floor; events add band energy on top.
  double white_floor = 0.05;
  double texture_power = 0.40;
  double event_power = 2.50;

  std::uint64_t seed = 0;

  double rho_at(Index a, Index b) const { return rho[static_cast<std::size_t>(a * classes + b)]; }
  void set_rho(Index a, Index b, double p) {
    rho[static_cast<std::size_t>(a * classes + b)] = p;
    rho[static_cast<std::size_t>(b * classes + a)] = p;
  }
};

struct SynthClip {
  Spectrogram spec;
  std::vector<int> weak;
  std::vector<Event> strong;
};

// Benchmark defaults: six classes, one strongly confounded pair (0, 1)
// and one background-entangled class (2), 240 frames of 64 mel bins.
GeneratorConfig default_generator_config();

// Copy of cfg with all off-diagonal co-occurrence and all background
// associations removed; single-class clips over the same templates.
GeneratorConfig decorrelated_config(const GeneratorConfig& cfg);

void validate_generator_config(const GeneratorConfig& cfg);

// The three frequency bands of a class template, each band a pair of
// adjacent mel rows (clamped at the top edge). Bands of distinct
// classes are disjoint whenever mel_bins >= 3 * classes.
std::vector<Index> class_template_rows(const GeneratorConfig& cfg, int cls);

// Draws the label set of one clip: a primary class uniformly, then each
// other class b independently with probability rho[primary][b], trimmed
// to events_max by keeping the primary and the lowest class ids. The
// primary class is reported through `primary_out` when non-null; the
// co-occurrence parameter is recoverable only conditional on it.
std::vector<int> sample_labels(const GeneratorConfig& cfg, Rng& rng, int* primary_out = nullptr);

// Renders one clip: background texture plus one event per label with
// duration in [event_min_frac, event_max_frac] of the clip and uniform
// onset, summed in the power domain and then logged.
SynthClip render_clip(const std::vector<int>& labels, const GeneratorConfig& cfg, Rng& rng);

// Convenience wrapper drawing labels and rendering from one per-clip
// stream. Split and index select the stream, so any subset of clips can
// be regenerated independently and in parallel with identical bytes.
SynthClip generate_clip(const GeneratorConfig& cfg, const std::string& split, Index index,
                        int* primary_out = nullptr);

// Writes the full benchmark: a confounded train split (weak labels
// only in the manifest), a confounded eval split, and a decorrelated
// eval split (both with events). Returns the manifest path. Layout:
//   out_dir/manifest.jsonl
//   out_dir/dataset.ini
//   out_dir/clips/<id>.slt
std::string emit_dataset(const GeneratorConfig& cfg, Index n_train, Index n_eval_confounded,
                         Index n_eval_decorrelated, const std::string& out_dir);

}  // namespace sedlab

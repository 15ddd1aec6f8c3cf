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

#include "sedlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "sedlab/manifest.hpp"
#include "sedlab/tensorfile.hpp"
#include "sedlab/threadpool.hpp"

namespace sedlab {

namespace {

// Ramp length fraction of the event duration, and the envelope floor
// that keeps even edge frames clearly above background energy.
constexpr double kRampFrac = 1.0 / 6.0;
constexpr double kEnvelopeFloor = 0.35;

std::string clip_id(const std::string& split, Index index) {
  const char* prefix = "clip";
  if (split == kSplitTrain) prefix = "train";
  else if (split == kSplitEvalConfounded) prefix = "evalconf";
  else if (split == kSplitEvalDecorrelated) prefix = "evaldec";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06lld", prefix, static_cast<long long>(index));
  return buf;
}

double texture_profile(const GeneratorConfig& cfg, int texture, Index bin) {
  const double center = (texture + 0.5) * static_cast<double>(cfg.mel_bins) / cfg.classes;
  const double width = static_cast<double>(cfg.mel_bins) / (2.0 * cfg.classes);
  const double z = (static_cast<double>(bin) - center) / width;
  return std::exp(-0.5 * z * z);
}

int choose_texture(const std::vector<int>& labels, const GeneratorConfig& cfg, Rng& rng) {
  for (int cls : labels) {
    const BackgroundAssociation& assoc = cfg.beta[static_cast<std::size_t>(cls)];
    if (assoc.strength > 0.0) {
      if (rng.bernoulli(assoc.strength)) return assoc.texture;
      break;
    }
  }
  return static_cast<int>(rng.uniform_int(0, cfg.classes - 1));
}

}  // namespace

GeneratorConfig default_generator_config() {
  GeneratorConfig cfg;
  cfg.rho.assign(static_cast<std::size_t>(cfg.classes * cfg.classes), 0.0);
  cfg.beta.assign(static_cast<std::size_t>(cfg.classes), BackgroundAssociation{});
  cfg.set_rho(0, 1, 0.9);
  cfg.beta[2] = BackgroundAssociation{2, 0.9};
  return cfg;
}

GeneratorConfig decorrelated_config(const GeneratorConfig& cfg) {
  GeneratorConfig out = cfg;
  std::fill(out.rho.begin(), out.rho.end(), 0.0);
  for (auto& assoc : out.beta) assoc.strength = 0.0;
  return out;
}

void validate_generator_config(const GeneratorConfig& cfg) {
  if (cfg.classes < 2) throw std::invalid_argument("generator needs at least 2 classes");
  if (cfg.frames < 8) throw std::invalid_argument("generator needs at least 8 frames");
  if (cfg.mel_bins < 3 * cfg.classes) {
    throw std::invalid_argument("generator needs mel_bins >= 3 * classes for disjoint templates");
  }
  if (cfg.rho.size() != static_cast<std::size_t>(cfg.classes * cfg.classes)) {
    throw std::invalid_argument("co-occurrence matrix must be classes x classes");
  }
  for (Index a = 0; a < cfg.classes; ++a) {
    for (Index b = 0; b < cfg.classes; ++b) {
      const double p = cfg.rho_at(a, b);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("co-occurrence probabilities must lie in [0,1]");
      }
      if (a != b && std::abs(p - cfg.rho_at(b, a)) > 1e-12) {
        throw std::invalid_argument("co-occurrence matrix must be symmetric");
      }
    }
  }
  if (cfg.beta.size() != static_cast<std::size_t>(cfg.classes)) {
    throw std::invalid_argument("background association vector must have one entry per class");
  }
  for (const auto& assoc : cfg.beta) {
    if (!(assoc.strength >= 0.0 && assoc.strength <= 1.0)) {
      throw std::invalid_argument("background association strength must lie in [0,1]");
    }
    if (assoc.texture < 0 || assoc.texture >= cfg.classes) {
      throw std::invalid_argument("background texture id out of range");
    }
  }
  if (cfg.events_min < 1 || cfg.events_max < cfg.events_min) {
    throw std::invalid_argument("events per clip range must satisfy 1 <= min <= max");
  }
  if (!(cfg.event_min_frac > 0.0 && cfg.event_min_frac <= cfg.event_max_frac &&
        cfg.event_max_frac <= 1.0)) {
    throw std::invalid_argument("event duration fractions must satisfy 0 < min <= max <= 1");
  }
}

std::vector<Index> class_template_rows(const GeneratorConfig& cfg, int cls) {
  std::vector<Index> rows;
  for (Index j = 0; j < 3; ++j) {
    const Index base = (j * cfg.classes + cls) * cfg.mel_bins / (3 * cfg.classes);
    rows.push_back(base);
    rows.push_back(std::min(base + 1, cfg.mel_bins - 1));
  }
  return rows;
}

std::vector<int> sample_labels(const GeneratorConfig& cfg, Rng& rng, int* primary_out) {
  const int primary = static_cast<int>(rng.uniform_int(0, cfg.classes - 1));
  if (primary_out) *primary_out = primary;
  std::vector<int> labels{primary};
  // All Bernoulli draws are consumed regardless of the trim so the
  // stream layout does not depend on outcomes.
  for (Index b = 0; b < cfg.classes; ++b) {
    if (b == primary) continue;
    if (rng.bernoulli(cfg.rho_at(primary, b))) labels.push_back(static_cast<int>(b));
  }
  std::sort(labels.begin(), labels.end());
  if (static_cast<Index>(labels.size()) > cfg.events_max) {
    // Keep the primary class, then the lowest class ids.
    std::vector<int> kept{primary};
    for (int cls : labels) {
      if (cls == primary) continue;
      if (static_cast<Index>(kept.size()) == cfg.events_max) break;
      kept.push_back(cls);
    }
    std::sort(kept.begin(), kept.end());
    labels = std::move(kept);
  }
  return labels;
}

SynthClip render_clip(const std::vector<int>& labels, const GeneratorConfig& cfg, Rng& rng) {
  validate_generator_config(cfg);
  if (labels.empty()) throw std::invalid_argument("render_clip requires a non-empty label set");
  for (int cls : labels) {
    if (cls < 0 || cls >= cfg.classes) throw std::invalid_argument("label out of class range");
  }
  const Index n = cfg.frames;
  const Index mel = cfg.mel_bins;

  const int texture = choose_texture(labels, cfg, rng);

  Tensor<double> power({mel, n});
  auto pmat = power.mat();
  for (Index t = 0; t < n; ++t) {
    for (Index b = 0; b < mel; ++b) {
      const double white = cfg.white_floor * rng.uniform(0.5, 1.5);
      const double tex = cfg.texture_power * texture_profile(cfg, texture, b) * rng.uniform(0.5, 1.5);
      pmat(b, t) = white + tex;
    }
  }

  const Index dur_min = std::max<Index>(1, static_cast<Index>(std::llround(cfg.event_min_frac * n)));
  const Index dur_max =
      std::max(dur_min, static_cast<Index>(std::llround(cfg.event_max_frac * n)));

  SynthClip clip;
  for (int cls : labels) {
    const Index dur = rng.uniform_int(dur_min, dur_max);
    if (dur > n) throw std::invalid_argument("event duration exceeds clip length");
    const Index onset = rng.uniform_int(0, n - dur);
    const Index offset = onset + dur;
    const Index ramp = std::max<Index>(1, static_cast<Index>(std::llround(kRampFrac * dur)));
    const std::vector<Index> rows = class_template_rows(cfg, cls);
    for (Index t = onset; t < offset; ++t) {
      const double rise = static_cast<double>(t - onset + 1) / ramp;
      const double fall = static_cast<double>(offset - t) / ramp;
      const double shape = std::min({1.0, rise, fall});
      const double env = kEnvelopeFloor + (1.0 - kEnvelopeFloor) * shape;
      for (Index r : rows) {
        pmat(r, t) += cfg.event_power * env * rng.uniform(0.7, 1.3);
      }
    }
    clip.strong.push_back(Event{cls, onset, offset});
  }

  clip.weak = labels;
  clip.spec.values = Tensor<float>({mel, n});
  for (Index i = 0; i < power.numel(); ++i) {
    clip.spec.values[i] = static_cast<float>(std::log(power[i] + kLogFloor));
  }
  clip.spec.frame_hop_seconds = 1.0 / cfg.frames_per_second;
  return clip;
}

SynthClip generate_clip(const GeneratorConfig& cfg, const std::string& split, Index index,
                        int* primary_out) {
  Rng rng(mix_seed(cfg.seed, split + "/clip", static_cast<std::uint64_t>(index)));
  const std::vector<int> labels = sample_labels(cfg, rng, primary_out);
  return render_clip(labels, cfg, rng);
}

std::string emit_dataset(const GeneratorConfig& cfg, Index n_train, Index n_eval_confounded,
                         Index n_eval_decorrelated, const std::string& out_dir) {
  validate_generator_config(cfg);
  if (n_train < 0 || n_eval_confounded < 0 || n_eval_decorrelated < 0) {
    throw std::invalid_argument("split sizes must be non-negative");
  }
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "clips");

  const GeneratorConfig dec = decorrelated_config(cfg);
  struct SplitPlan {
    const char* name;
    const GeneratorConfig* cfg;
    Index count;
    bool strong;
  };
  const SplitPlan plan[] = {
      {kSplitTrain, &cfg, n_train, false},
      {kSplitEvalConfounded, &cfg, n_eval_confounded, true},
      {kSplitEvalDecorrelated, &dec, n_eval_decorrelated, true},
  };

  const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  ManifestWriter writer(manifest_path);
  for (const SplitPlan& split : plan) {
    // Clips are rendered in parallel from per-clip seeds; manifest
    // records are collected per index and written in order afterwards
    // so output bytes do not depend on scheduling.
    std::vector<SynthClip> clips(static_cast<std::size_t>(split.count));
    parallel_for(split.count, worker_count(), [&](Index i) {
      SynthClip clip = generate_clip(*split.cfg, split.name, i);
      const std::string id = clip_id(split.name, i);
      write_tensor_f32((fs::path(out_dir) / "clips" / (id + ".slt")).string(), clip.spec.values);
      clips[static_cast<std::size_t>(i)] = std::move(clip);
    });
    for (Index i = 0; i < split.count; ++i) {
      const SynthClip& clip = clips[static_cast<std::size_t>(i)];
      const std::string id = clip_id(split.name, i);
      const std::string file = "clips/" + id + ".slt";
      if (split.strong) {
        writer.add_strong(id, split.name, file, clip.weak, clip.strong);
      } else {
        writer.add_weak(id, split.name, file, clip.weak);
      }
    }
  }
  writer.close();

  std::ofstream ini((fs::path(out_dir) / "dataset.ini").string(), std::ios::trunc);
  if (!ini) throw std::runtime_error("cannot write dataset summary in '" + out_dir + "'");
  ini << "[dataset]\n";
  ini << "classes = " << cfg.classes << "\n";
  ini << "frames = " << cfg.frames << "\n";
  ini << "mel_bins = " << cfg.mel_bins << "\n";
  ini << "frames_per_second = " << cfg.frames_per_second << "\n";
  ini << "seed = " << cfg.seed << "\n";
  ini.flush();
  if (!ini) throw std::runtime_error("write failed for dataset summary in '" + out_dir + "'");
  return manifest_path;
}

}  // namespace sedlab

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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sedlab/metrics.hpp"
#include "sedlab/model.hpp"
#include "sedlab/train_core.hpp"

namespace sedlab {

// Disk-backed experiment driver around the scalar-generic training
// core. Runs are float precision and deterministic: a (variant, seed)
// pair maps to one run directory, reruns of a finished run change
// nothing, and interrupted runs resume from their last epoch
// checkpoint.

struct TrainConfig {
  Variant variant = Variant::kCi;
  std::uint64_t seed = 0;
  Index epochs = 8;
  Index batch_size = 16;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  // Context pool update rate (the lambda of the EMA) and the shared
  // standardization floor.
  double pool_update_rate = 0.01;
  double standardize_eps = 1e-5;
  std::array<Index, 3> channels = {4, 6, 8};
  // Testing hook: stop after this many epochs when positive, leaving a
  // resumable checkpoint behind.
  Index halt_after_epochs = 0;
};

struct TrainClipData {
  Tensor<float> spec3;  // [1 x mel x frames]
  std::vector<int> weak;
};

struct EvalClipData {
  std::string id;
  Tensor<float> spec3;
  std::vector<int> weak;
  std::vector<Event> events;
};

struct Dataset {
  Index classes = 0;
  Index frames = 0;
  Index mel_bins = 0;
  double frames_per_second = 25.0;
  std::vector<TrainClipData> train;
  std::vector<EvalClipData> eval_confounded;
  std::vector<EvalClipData> eval_decorrelated;
};

// Loads manifest, dataset summary and every referenced tensor into
// memory. Training never touches the evaluation splits' events; they
// are loaded for the evaluation passes only.
Dataset load_dataset(const std::string& data_dir);

struct TrainSummary {
  Index epochs_run = 0;
  std::uint64_t optimizer_steps = 0;
  std::uint64_t pool_updates = 0;
  Index degenerate_rows = 0;
  double final_mean_loss = 0.0;
  bool resumed = false;
  bool halted_early = false;
};

// Trains one (variant, seed) run in run_dir, writing config, epoch
// checkpoints and a log. Does not evaluate. Returns the summary; the
// model and pool are left at their final states.
TrainSummary train_run(Model<float>& model, ContextPool<float>& pool, const Dataset& data,
                       const TrainConfig& cfg, const std::string& run_dir);

// Evaluates one split with the trained model and frozen pool.
EvalResult evaluate_split(Model<float>& model, const ContextPool<float>& pool,
                          const std::vector<EvalClipData>& clips, Variant variant,
                          const MetricsConfig& mcfg);

struct ExperimentConfig {
  std::string data_dir;
  std::string out_dir;
  std::vector<Variant> variants = {Variant::kBaseline, Variant::kCi};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  TrainConfig base;
  MetricsConfig metrics;
};

struct RunOutcome {
  std::string run_id;
  std::string run_dir;
  bool skipped = false;
  TrainSummary summary;
};

std::string run_id_for(Variant variant, std::uint64_t seed);

// Runs one (variant, seed) end to end: train (or resume), evaluate both
// splits, write metrics.csv. Skips entirely when metrics.csv already
// exists. Model initialization depends on the seed only, so variants
// start from identical weights.
RunOutcome run_single(const Dataset& data, const ExperimentConfig& cfg, Variant variant,
                      std::uint64_t seed);

// Full grid of cfg.variants x cfg.seeds.
std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg);

}  // namespace sedlab

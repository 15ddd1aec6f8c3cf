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

#include "sedlab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sedlab/checkpoint.hpp"
#include "sedlab/config.hpp"
#include "sedlab/manifest.hpp"
#include "sedlab/rng.hpp"
#include "sedlab/tensorfile.hpp"

namespace sedlab {

namespace fs = std::filesystem;

namespace {

Tensor<float> load_spec3(const std::string& path, Index mel, Index frames) {
  Tensor<float> flat = read_tensor_f32(path);
  if (flat.rank() != 2 || flat.dim(0) != mel || flat.dim(1) != frames) {
    throw std::runtime_error("clip tensor '" + path + "' has shape " + shape_str(flat.shape()) +
                             ", dataset declares [" + std::to_string(mel) + " x " +
                             std::to_string(frames) + "]");
  }
  Tensor<float> spec3(Shape{1, mel, frames});
  spec3.data() = flat.data();
  return spec3;
}

ModelConfig model_config_for(const Dataset& data, const TrainConfig& cfg) {
  ModelConfig mc;
  mc.mel_bins = data.mel_bins;
  mc.classes = data.classes;
  mc.channels = cfg.channels;
  mc.standardize_eps = cfg.standardize_eps;
  return mc;
}

std::string param_norms(Model<float>& model) {
  std::ostringstream out;
  for (Param<float>* p : model.params()) {
    const double norm = std::sqrt(static_cast<double>(
        p->value.data().template cast<double>().square().sum()));
    out << ' ' << p->name << "=" << norm;
  }
  return out.str();
}

void write_run_config(const std::string& path, const Dataset& data, const TrainConfig& cfg) {
  std::ostringstream out;
  out << "[run]\n";
  out << "variant = " << variant_name(cfg.variant) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "[data]\n";
  out << "classes = " << data.classes << "\n";
  out << "frames = " << data.frames << "\n";
  out << "mel_bins = " << data.mel_bins << "\n";
  out << "train_clips = " << data.train.size() << "\n";
  out << "[train]\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "batch_size = " << cfg.batch_size << "\n";
  char lr[40];
  std::snprintf(lr, sizeof(lr), "%.17g", cfg.lr);
  out << "lr = " << lr << "\n";
  out << "optimizer = " << optimizer_name(cfg.optimizer) << "\n";
  char rate[40];
  std::snprintf(rate, sizeof(rate), "%.17g", cfg.pool_update_rate);
  out << "pool_update_rate = " << rate << "\n";
  out << "channels = " << cfg.channels[0] << "," << cfg.channels[1] << "," << cfg.channels[2]
      << "\n";
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write run config '" + path + "'");
  file << out.str();
}

struct CheckpointNames {
  static std::string moment1(const std::string& param) { return "adam.m." + param; }
  static std::string moment2(const std::string& param) { return "adam.v." + param; }
};

void save_state(const std::string& path, Model<float>& model, const ContextPool<float>& pool,
                Optimizer<float>& opt, std::uint64_t fingerprint, std::uint64_t epochs_done) {
  Checkpoint ck;
  ck.fingerprint = fingerprint;
  ck.epochs_done = epochs_done;
  ck.optimizer_steps = opt.steps();
  for (Param<float>* p : model.params()) ck.tensors.emplace_back(p->name, p->value);
  ck.tensors.emplace_back("context_pool.q", pool.q);
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.tensors.emplace_back(CheckpointNames::moment1(params[i]->name), opt.moment1(i));
    ck.tensors.emplace_back(CheckpointNames::moment2(params[i]->name), opt.moment2(i));
  }
  save_checkpoint(path, ck);
}

void restore_tensor(const Checkpoint& ck, const std::string& name, Tensor<float>* dst,
                    const std::string& path) {
  const Tensor<float>* src = ck.find(name);
  if (!src) throw std::runtime_error("checkpoint '" + path + "' is missing tensor '" + name + "'");
  if (!src->same_shape(*dst)) {
    throw std::runtime_error("checkpoint '" + path + "' tensor '" + name + "' has shape " +
                             shape_str(src->shape()) + ", expected " + shape_str(dst->shape()));
  }
  dst->data() = src->data();
}

std::uint64_t restore_state(const std::string& path, Model<float>& model,
                            ContextPool<float>& pool, Optimizer<float>& opt,
                            std::uint64_t fingerprint) {
  const Checkpoint ck = load_checkpoint(path, fingerprint);
  for (Param<float>* p : model.params()) restore_tensor(ck, p->name, &p->value, path);
  restore_tensor(ck, "context_pool.q", &pool.q, path);
  const auto& params = opt.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    restore_tensor(ck, CheckpointNames::moment1(params[i]->name), &opt.moment1(i), path);
    restore_tensor(ck, CheckpointNames::moment2(params[i]->name), &opt.moment2(i), path);
  }
  opt.set_steps(ck.optimizer_steps);
  return ck.epochs_done;
}

}  // namespace

Dataset load_dataset(const std::string& data_dir) {
  const fs::path dir(data_dir);
  const std::string manifest_path = (dir / "manifest.jsonl").string();
  const std::string ini_path = (dir / "dataset.ini").string();
  if (!fs::exists(manifest_path)) {
    throw std::runtime_error("no manifest at '" + manifest_path + "'; generate the dataset first");
  }
  const Config ini = Config::parse_file(ini_path);
  Dataset data;
  data.classes = ini.get_int("dataset.classes", 0);
  data.frames = ini.get_int("dataset.frames", 0);
  data.mel_bins = ini.get_int("dataset.mel_bins", 0);
  data.frames_per_second = ini.get_double("dataset.frames_per_second", 25.0);
  if (data.classes < 1 || data.frames < 1 || data.mel_bins < 1) {
    throw std::runtime_error("dataset summary '" + ini_path + "' lacks classes/frames/mel_bins");
  }

  for (const TrainExample& ex : load_train_examples(manifest_path)) {
    TrainClipData clip;
    clip.spec3 = load_spec3((dir / ex.file).string(), data.mel_bins, data.frames);
    clip.weak = ex.weak;
    data.train.push_back(std::move(clip));
  }
  auto load_eval = [&](const char* split) {
    std::vector<EvalClipData> out;
    for (const EvalExample& ex : load_eval_examples(manifest_path, split)) {
      EvalClipData clip;
      clip.id = ex.id;
      clip.spec3 = load_spec3((dir / ex.file).string(), data.mel_bins, data.frames);
      clip.weak = ex.weak;
      clip.events = ex.events;
      out.push_back(std::move(clip));
    }
    return out;
  };
  data.eval_confounded = load_eval(kSplitEvalConfounded);
  data.eval_decorrelated = load_eval(kSplitEvalDecorrelated);
  return data;
}

TrainSummary train_run(Model<float>& model, ContextPool<float>& pool, const Dataset& data,
                       const TrainConfig& cfg, const std::string& run_dir) {
  if (data.train.empty()) throw std::runtime_error("training split is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (cfg.epochs < 1) throw std::invalid_argument("epoch count must be at least 1");

  fs::create_directories(fs::path(run_dir) / "checkpoints");
  write_run_config((fs::path(run_dir) / "config").string(), data, cfg);
  std::ofstream log((fs::path(run_dir) / "log").string(), std::ios::app);

  OptimizerConfig ocfg;
  ocfg.kind = cfg.optimizer;
  ocfg.lr = cfg.lr;
  Optimizer<float> opt(model.params(), ocfg);

  const std::uint64_t fingerprint = config_fingerprint(model.cfg, data.frames);
  const std::string ckpt_path = (fs::path(run_dir) / "checkpoints" / "last.ckpt").string();

  TrainSummary summary;
  Index epoch_start = 0;
  if (fs::exists(ckpt_path)) {
    epoch_start = static_cast<Index>(restore_state(ckpt_path, model, pool, opt, fingerprint));
    summary.resumed = true;
    log << "resumed after epoch " << epoch_start << "\n";
  }

  const Index n_clips = static_cast<Index>(data.train.size());
  for (Index epoch = epoch_start; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Index> order(static_cast<std::size_t>(n_clips));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    Index epoch_degenerate = 0;
    for (Index start = 0; start < n_clips; start += cfg.batch_size) {
      const Index stop = std::min(n_clips, start + cfg.batch_size);
      const float grad_seed = 1.0f / static_cast<float>(stop - start);
      model.zero_grads();
      for (Index b = start; b < stop; ++b) {
        const TrainClipData& clip = data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(b)])];
        const ClipStepResult r =
            train_clip(model, pool, clip.spec3, clip.weak, cfg.variant, grad_seed);
        if (!std::isfinite(r.loss_total)) {
          throw std::runtime_error(
              "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
              std::to_string(start / cfg.batch_size) + " clip index " +
              std::to_string(order[static_cast<std::size_t>(b)]) + "; parameter norms:" +
              param_norms(model));
        }
        epoch_loss += r.loss_total;
        epoch_degenerate += r.degenerate_rows;
        if (r.pool_updated) ++summary.pool_updates;
      }
      opt.step();
    }
    summary.epochs_run = epoch + 1 - epoch_start;
    summary.degenerate_rows += epoch_degenerate;
    summary.final_mean_loss = epoch_loss / static_cast<double>(n_clips);

    save_state(ckpt_path, model, pool, opt, fingerprint, static_cast<std::uint64_t>(epoch + 1));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %lld mean_loss %.6f degenerate_rows %lld seconds %.2f\n",
                  static_cast<long long>(epoch + 1), summary.final_mean_loss,
                  static_cast<long long>(epoch_degenerate), seconds);
    log << line;
    log.flush();

    if (cfg.halt_after_epochs > 0 && epoch + 1 >= cfg.halt_after_epochs &&
        epoch + 1 < cfg.epochs) {
      summary.halted_early = true;
      break;
    }
  }
  summary.optimizer_steps = opt.steps();
  return summary;
}

EvalResult evaluate_split(Model<float>& model, const ContextPool<float>& pool,
                          const std::vector<EvalClipData>& clips, Variant variant,
                          const MetricsConfig& mcfg) {
  EvalAccumulator acc(model.cfg.classes, mcfg);
  Tensor<double> frames;
  std::vector<double> clip_scores;
  for (const EvalClipData& clip : clips) {
    eval_clip(model, pool, clip.spec3, variant, &frames, &clip_scores);
    acc.add_clip(frames, clip_scores, clip.weak, clip.events);
  }
  return acc.result();
}

std::string run_id_for(Variant variant, std::uint64_t seed) {
  return variant_name(variant) + "_seed" + std::to_string(seed);
}

RunOutcome run_single(const Dataset& data, const ExperimentConfig& cfg, Variant variant,
                      std::uint64_t seed) {
  RunOutcome outcome;
  outcome.run_id = run_id_for(variant, seed);
  const fs::path run_dir = fs::path(cfg.out_dir) / "runs" / outcome.run_id;
  outcome.run_dir = run_dir.string();
  const fs::path metrics_path = run_dir / "metrics.csv";
  if (fs::exists(metrics_path)) {
    outcome.skipped = true;
    return outcome;
  }

  TrainConfig tc = cfg.base;
  tc.variant = variant;
  tc.seed = seed;

  ModelConfig mc = model_config_for(data, tc);
  Model<float> model(mc);
  // Initialization depends on the seed only; baseline and ci runs of
  // one seed start from identical weights.
  model.init(mix_seed(seed, "model_init"));
  ContextPool<float> pool(data.classes, data.frames, tc.pool_update_rate);

  outcome.summary = train_run(model, pool, data, tc, outcome.run_dir);
  if (outcome.summary.halted_early) return outcome;

  std::ostringstream csv;
  csv << metrics_csv_header() << '\n';
  append_metric_rows(csv, variant_name(variant), seed, kSplitEvalConfounded,
                     evaluate_split(model, pool, data.eval_confounded, variant, cfg.metrics));
  append_metric_rows(csv, variant_name(variant), seed, kSplitEvalDecorrelated,
                     evaluate_split(model, pool, data.eval_decorrelated, variant, cfg.metrics));
  const fs::path tmp = run_dir / "metrics.csv.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metrics at '" + tmp.string() + "'");
    out << csv.str();
  }
  fs::rename(tmp, metrics_path);
  return outcome;
}

std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg) {
  const Dataset data = load_dataset(cfg.data_dir);
  std::vector<RunOutcome> outcomes;
  for (Variant variant : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      outcomes.push_back(run_single(data, cfg, variant, seed));
    }
  }
  return outcomes;
}

}  // namespace sedlab

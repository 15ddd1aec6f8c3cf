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

#include "sedlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sedlab/causal.hpp"
#include "sedlab/checkpoint.hpp"
#include "sedlab/metrics.hpp"
#include "sedlab/model.hpp"
#include "sedlab/rng.hpp"
#include "sedlab/train_core.hpp"
#include "sedlab/trainer.hpp"

namespace fs = std::filesystem;

namespace sedlab {
namespace {

// Distinguishes operator mistakes (exit 1) from runtime failures
// (exit 2) raised while a command is executing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt_g(double v, const char* format = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

void print_resolved(const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::cout << "resolved config for " << command << ":\n";
  for (const auto& [key, value] : kv) std::cout << "  " << key << " = " << value << "\n";
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    std::uint64_t value = 0;
    try {
      value = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size())
      throw UsageError("bad seed list entry '" + item + "' in '" + text + "'");
    seeds.push_back(value);
  }
  if (seeds.empty()) throw UsageError("seed list is empty");
  return seeds;
}

std::array<Index, 3> parse_channels(const std::string& text) {
  std::array<Index, 3> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long value = 0;
    try {
      value = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size() || value <= 0 || n >= 3)
      throw UsageError("channels must be three positive integers, got '" + text + "'");
    out[n++] = value;
  }
  if (n != 3) throw UsageError("channels must be three positive integers, got '" + text + "'");
  return out;
}

std::string channels_str(const std::array<Index, 3>& c) {
  return std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]);
}

std::vector<Variant> parse_variants(const std::string& text) {
  if (text == "both") return {Variant::kBaseline, Variant::kCi};
  if (text == "baseline") return {Variant::kBaseline};
  if (text == "ci") return {Variant::kCi};
  throw UsageError("variant must be baseline, ci or both, got '" + text + "'");
}

Config load_config_file(const std::string& path) {
  if (path.empty()) return Config::parse_string("", "<defaults>");
  return Config::parse_file(path);
}

MetricsConfig resolve_metrics(const Config& cfg) {
  MetricsConfig m;
  m.theta = cfg.get_double("metrics.theta", m.theta);
  m.median_win = cfg.get_int("metrics.median_win", m.median_win);
  m.segment_len = cfg.get_int("metrics.segment_len", m.segment_len);
  m.collar = cfg.get_int("metrics.collar", m.collar);
  m.offset_dur_frac = cfg.get_double("metrics.offset_dur_frac", m.offset_dur_frac);
  return m;
}

// Rebuilds the model architecture from checkpoint tensor shapes, checks
// the config fingerprint against the dataset, and loads weights and the
// context pool. Optimizer moment tensors are ignored.
std::unique_ptr<Model<float>> model_from_checkpoint(const Checkpoint& ck, const Dataset& data,
                                                    ContextPool<float>& pool) {
  const Tensor<float>* w1 = ck.find("backbone.w1");
  const Tensor<float>* w2 = ck.find("backbone.w2");
  const Tensor<float>* w3 = ck.find("backbone.w3");
  if (w1 == nullptr || w2 == nullptr || w3 == nullptr)
    throw std::runtime_error("checkpoint is missing backbone weights");
  ModelConfig mc;
  mc.mel_bins = data.mel_bins;
  mc.classes = data.classes;
  mc.channels = {w1->dim(0), w2->dim(0), w3->dim(0)};
  const std::uint64_t expected = config_fingerprint(mc, data.frames);
  if (ck.fingerprint != expected)
    throw std::runtime_error("config fingerprint mismatch: checkpoint has " +
                             std::to_string(ck.fingerprint) + ", dataset and architecture give " +
                             std::to_string(expected) + "; refusing to evaluate");
  auto model = std::make_unique<Model<float>>(mc);
  for (Param<float>* p : model->params()) {
    const Tensor<float>* stored = ck.find(p->name);
    if (stored == nullptr) throw std::runtime_error("checkpoint is missing tensor " + p->name);
    if (!stored->same_shape(p->value))
      throw std::runtime_error("checkpoint tensor " + p->name + " has shape " +
                               shape_str(stored->shape()) + ", model expects " +
                               shape_str(p->value.shape()));
    p->value = *stored;
  }
  const Tensor<float>* q = ck.find("context_pool.q");
  if (q == nullptr) throw std::runtime_error("checkpoint is missing tensor context_pool.q");
  if (!q->same_shape(pool.q))
    throw std::runtime_error("checkpoint pool has shape " + shape_str(q->shape()) +
                             ", dataset expects " + shape_str(pool.q.shape()));
  pool.q = *q;
  return model;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
  const Config cfg = load_config_file(config_path);
  GenDataSettings s = resolve_gen_data(cfg);
  if (seed.has_value()) s.gen.seed = *seed;
  const Index ca = cfg.get_int("generator.confound_a", 0);
  const Index cb = cfg.get_int("generator.confound_b", 1);
  const bool pair_valid = ca != cb && ca >= 0 && cb >= 0 && ca < s.gen.classes &&
                          cb < s.gen.classes;
  print_resolved(
      "gen-data",
      {{"config", config_path.empty() ? "<defaults>" : config_path},
       {"out", out_dir},
       {"classes", std::to_string(s.gen.classes)},
       {"frames", std::to_string(s.gen.frames)},
       {"mel_bins", std::to_string(s.gen.mel_bins)},
       {"frames_per_second", fmt_g(s.gen.frames_per_second, "%g")},
       {"seed", std::to_string(s.gen.seed)},
       {"confound_pair", std::to_string(ca) + "," + std::to_string(cb)},
       {"confound_rho", fmt_g(pair_valid ? s.gen.rho_at(ca, cb) : 0.0, "%g")},
       {"events_min", std::to_string(s.gen.events_min)},
       {"events_max", std::to_string(s.gen.events_max)},
       {"n_train", std::to_string(s.n_train)},
       {"n_eval_confounded", std::to_string(s.n_eval_confounded)},
       {"n_eval_decorrelated", std::to_string(s.n_eval_decorrelated)}});
  emit_dataset(s.gen, s.n_train, s.n_eval_confounded, s.n_eval_decorrelated, out_dir);
  std::cout << "wrote " << (s.n_train + s.n_eval_confounded + s.n_eval_decorrelated)
            << " clips under " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, const std::string& variant_str,
              const std::string& seeds_str, const std::optional<Index>& epochs,
              const std::optional<Index>& batch_size, const std::optional<double>& lr,
              const std::string& channels_flag) {
  const Config cfg = load_config_file(config_path);
  ExperimentConfig ec;
  ec.data_dir = data_dir;
  ec.out_dir = out_dir;
  ec.variants = parse_variants(variant_str);
  ec.seeds = parse_seed_list(seeds_str);
  ec.base.epochs = cfg.get_int("train.epochs", ec.base.epochs);
  ec.base.batch_size = cfg.get_int("train.batch_size", ec.base.batch_size);
  ec.base.lr = cfg.get_double("train.lr", ec.base.lr);
  ec.base.pool_update_rate = cfg.get_double("train.pool_update_rate", ec.base.pool_update_rate);
  const std::string opt_str =
      cfg.get_str("train.optimizer", optimizer_name(ec.base.optimizer));
  ec.base.optimizer = parse_optimizer(opt_str);
  ec.base.channels = parse_channels(
      cfg.get_str("train.channels", channels_str(ec.base.channels)));
  if (epochs.has_value()) ec.base.epochs = *epochs;
  if (batch_size.has_value()) ec.base.batch_size = *batch_size;
  if (lr.has_value()) ec.base.lr = *lr;
  if (!channels_flag.empty()) ec.base.channels = parse_channels(channels_flag);
  ec.metrics = resolve_metrics(cfg);

  std::string variants_text;
  for (Variant v : ec.variants)
    variants_text += (variants_text.empty() ? "" : ",") + std::string(variant_name(v));
  std::string seeds_text;
  for (std::uint64_t s : ec.seeds)
    seeds_text += (seeds_text.empty() ? "" : ",") + std::to_string(s);
  print_resolved("train", {{"config", config_path.empty() ? "<defaults>" : config_path},
                           {"data", ec.data_dir},
                           {"out", ec.out_dir},
                           {"variants", variants_text},
                           {"seeds", seeds_text},
                           {"epochs", std::to_string(ec.base.epochs)},
                           {"batch_size", std::to_string(ec.base.batch_size)},
                           {"lr", fmt_g(ec.base.lr, "%g")},
                           {"optimizer", optimizer_name(ec.base.optimizer)},
                           {"pool_update_rate", fmt_g(ec.base.pool_update_rate, "%g")},
                           {"channels", channels_str(ec.base.channels)},
                           {"theta", fmt_g(ec.metrics.theta, "%g")}});

  const std::vector<RunOutcome> outcomes = run_experiment(ec);
  for (const RunOutcome& r : outcomes) {
    if (r.skipped) {
      std::cout << "run " << r.run_id << " skipped (metrics.csv exists)\n";
    } else {
      std::cout << "run " << r.run_id << " trained: epochs " << r.summary.epochs_run
                << ", final mean loss " << fmt_g(r.summary.final_mean_loss, "%.6f") << "\n";
    }
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& data_dir,
             const std::string& ckpt_path, const std::string& variant_str,
             const std::string& split_str, std::uint64_t seed_label) {
  const Config cfg = load_config_file(config_path);
  const MetricsConfig mcfg = resolve_metrics(cfg);
  const std::vector<Variant> variants = parse_variants(variant_str);
  if (variants.size() != 1) throw UsageError("eval takes a single variant, not 'both'");
  if (split_str != "confounded" && split_str != "decorrelated" && split_str != "both")
    throw UsageError("split must be confounded, decorrelated or both, got '" + split_str + "'");

  print_resolved("eval", {{"config", config_path.empty() ? "<defaults>" : config_path},
                          {"data", data_dir},
                          {"checkpoint", ckpt_path},
                          {"variant", variant_name(variants[0])},
                          {"split", split_str},
                          {"seed", std::to_string(seed_label)},
                          {"theta", fmt_g(mcfg.theta, "%g")}});

  const Dataset data = load_dataset(data_dir);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  ContextPool<float> pool(data.classes, data.frames);
  const std::unique_ptr<Model<float>> model = model_from_checkpoint(ck, data, pool);

  std::cout << metrics_csv_header() << "\n";
  const std::string vname = variant_name(variants[0]);
  if (split_str == "confounded" || split_str == "both") {
    const EvalResult r = evaluate_split(*model, pool, data.eval_confounded, variants[0], mcfg);
    append_metric_rows(std::cout, vname, seed_label, kSplitEvalConfounded, r);
  }
  if (split_str == "decorrelated" || split_str == "both") {
    const EvalResult r = evaluate_split(*model, pool, data.eval_decorrelated, variants[0], mcfg);
    append_metric_rows(std::cout, vname, seed_label, kSplitEvalDecorrelated, r);
  }
  return 0;
}

int cmd_compare(const std::string& out_dir) {
  print_resolved("compare", {{"runs", out_dir}});
  const std::vector<CompareRow> rows = aggregate_runs(out_dir);
  if (rows.empty()) throw std::runtime_error("no runs/*/metrics.csv found under " + out_dir);
  std::cout << compare_csv(rows);
  return 0;
}

}  // namespace

OracleReport oracle_report(Model<float>& model, const ContextPool<float>& pool,
                           const std::vector<EvalClipData>& clips) {
  OracleReport report;
  const Index k = pool.classes();
  Tensor<float> ones(Shape{k});
  for (Index i = 0; i < k; ++i) ones[i] = 1.0f;

  std::vector<Tensor<float>> features;
  features.reserve(clips.size());
  for (const EvalClipData& clip : clips) {
    Tape<float> t;
    Var<float> x = model.backbone.forward(t, t.constant(clip.spec3));
    features.push_back(x.value());
  }

  std::vector<Tensor<float>> exact_scores;
  exact_scores.reserve(clips.size());
  const auto t_exact0 = std::chrono::steady_clock::now();
  for (const Tensor<float>& x : features)
    exact_scores.push_back(exact_backdoor(x, pool, model));
  const auto t_exact1 = std::chrono::steady_clock::now();

  std::vector<Tensor<float>> approx_scores;
  approx_scores.reserve(clips.size());
  const auto t_approx0 = std::chrono::steady_clock::now();
  for (const Tensor<float>& x : features)
    approx_scores.push_back(approx_backdoor(x, pool, ones, model));
  const auto t_approx1 = std::chrono::steady_clock::now();

  report.exact_seconds = std::chrono::duration<double>(t_exact1 - t_exact0).count();
  report.approx_seconds = std::chrono::duration<double>(t_approx1 - t_approx0).count();
  report.runtime_ratio =
      report.approx_seconds > 0.0 ? report.exact_seconds / report.approx_seconds : 0.0;

  double dev_sum = 0.0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    double max_abs = 0.0;
    double sum_abs = 0.0;
    for (Index c = 0; c < k; ++c) {
      const double d = std::abs(static_cast<double>(exact_scores[i][c]) -
                                static_cast<double>(approx_scores[i][c]));
      max_abs = std::max(max_abs, d);
      sum_abs += d;
    }
    report.clip_ids.push_back(clips[i].id);
    report.max_abs_deviation.push_back(max_abs);
    report.mean_abs_deviation.push_back(sum_abs / static_cast<double>(k));
    report.overall_max_abs = std::max(report.overall_max_abs, max_abs);
    dev_sum += sum_abs / static_cast<double>(k);
  }
  if (!clips.empty()) {
    report.overall_mean_abs = dev_sum / static_cast<double>(clips.size());
    std::vector<double> sorted = report.max_abs_deviation;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    report.median_max_abs =
        (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  return report;
}

namespace {

int cmd_validate_oracles(const std::string& data_dir, const std::string& ckpt_path,
                         std::uint64_t seed, const std::string& channels_flag,
                         const std::string& out_file) {
  print_resolved("validate-oracles",
                 {{"data", data_dir},
                  {"checkpoint", ckpt_path.empty() ? "<random frozen network>" : ckpt_path},
                  {"seed", std::to_string(seed)},
                  {"channels", ckpt_path.empty() ? channels_flag : "<from checkpoint>"},
                  {"out", out_file.empty() ? "<stdout>" : out_file}});

  const Dataset data = load_dataset(data_dir);
  if (data.eval_confounded.empty())
    throw std::runtime_error("dataset has no confounded eval clips to validate on");

  ContextPool<float> pool(data.classes, data.frames);
  std::unique_ptr<Model<float>> model;
  if (!ckpt_path.empty()) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    model = model_from_checkpoint(ck, data, pool);
  } else {
    // A frozen random network with a non-trivial projection and pool, so
    // the two paths diverge by more than rounding when k > 1.
    ModelConfig mc;
    mc.mel_bins = data.mel_bins;
    mc.classes = data.classes;
    mc.channels = parse_channels(channels_flag);
    model = std::make_unique<Model<float>>(mc);
    model->init(mix_seed(seed, "model_init"));
    Rng proj_rng(mix_seed(seed, "proj"));
    for (Index i = 0; i < model->proj.w.value.numel(); ++i)
      model->proj.w.value[i] = static_cast<float>(proj_rng.normal(0.0, 0.1));
    for (Index i = 0; i < model->proj.b.value.numel(); ++i)
      model->proj.b.value[i] = static_cast<float>(proj_rng.normal(0.0, 0.1));
    Rng pool_rng(mix_seed(seed, "pool"));
    std::vector<Index> all(static_cast<std::size_t>(data.classes));
    std::iota(all.begin(), all.end(), 0);
    Tensor<float> m(Shape{data.classes, data.frames});
    for (int warm = 0; warm < 3; ++warm) {
      for (Index i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(pool_rng.uniform());
      pool.update(m, all);
    }
  }

  const OracleReport report = oracle_report(*model, pool, data.eval_confounded);

  std::ostringstream csv;
  csv << "clip,max_abs_deviation,mean_abs_deviation\n";
  for (std::size_t i = 0; i < report.clip_ids.size(); ++i)
    csv << report.clip_ids[i] << "," << fmt_g(report.max_abs_deviation[i]) << ","
        << fmt_g(report.mean_abs_deviation[i]) << "\n";
  if (out_file.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(out_file, std::ios::binary);
    if (!out.good()) throw std::runtime_error("cannot write " + out_file);
    out << csv.str();
  }

  std::cout << "clips " << report.clip_ids.size() << "\n";
  std::cout << "deviation_mean_abs " << fmt_g(report.overall_mean_abs) << "\n";
  std::cout << "deviation_median_max_abs " << fmt_g(report.median_max_abs) << "\n";
  std::cout << "deviation_max_abs " << fmt_g(report.overall_max_abs) << "\n";
  std::cout << "exact_seconds " << fmt_g(report.exact_seconds, "%.6f") << "\n";
  std::cout << "approx_seconds " << fmt_g(report.approx_seconds, "%.6f") << "\n";
  std::cout << "runtime_ratio " << fmt_g(report.runtime_ratio, "%.3f") << "\n";
  return 0;
}

int cmd_grad_check(std::uint64_t seed, double tol) {
  print_resolved("grad-check", {{"seed", std::to_string(seed)}, {"tol", fmt_g(tol, "%g")}});

  ModelConfig mc;
  mc.mel_bins = 16;
  mc.classes = 3;
  mc.channels = {2, 3, 4};
  const Index frames = 12;
  Model<double> model(mc);
  model.init(mix_seed(seed, "model_init"));
  Rng proj_rng(mix_seed(seed, "proj"));
  for (Index i = 0; i < model.proj.w.value.numel(); ++i)
    model.proj.w.value[i] = proj_rng.normal(0.0, 0.1);
  for (Index i = 0; i < model.proj.b.value.numel(); ++i)
    model.proj.b.value[i] = proj_rng.normal(0.0, 0.1);

  ContextPool<double> pool(mc.classes, frames);
  Rng pool_rng(mix_seed(seed, "pool"));
  std::vector<Index> all = {0, 1, 2};
  Tensor<double> m(Shape{mc.classes, frames});
  for (int warm = 0; warm < 3; ++warm) {
    for (Index i = 0; i < m.numel(); ++i) m[i] = pool_rng.uniform();
    pool.update(m, all);
  }

  Rng data_rng(mix_seed(seed, "spec"));
  Tensor<double> spec(Shape{1, mc.mel_bins, frames});
  for (Index i = 0; i < spec.numel(); ++i) spec[i] = data_rng.uniform(-2.0, 2.0);
  const std::vector<int> weak = {0, 2};
  const Tensor<double> target = weak_target<double>(weak, mc.classes);
  const Tensor<double> mask = scaled_mask(target, mc.classes);

  // The frozen-pool dual-branch loss; the pool is state, not a
  // parameter, so it stays constant across evaluations.
  const auto loss_graph = [&](Tape<double>& t) {
    Var<double> x = model.backbone.forward(t, t.constant(spec));
    Var<double> cw = t.param(model.classifier.w);
    Var<double> cb = t.param(model.classifier.b);
    Var<double> l1 = bce_loss(aggregate_clip(frame_scores(t, x, cw, cb)), target);
    Var<double> xe = enhance(t, x, pool.q, mask, t.param(model.proj.w), t.param(model.proj.b));
    Var<double> l2 = bce_loss(aggregate_clip(frame_scores(t, xe, cw, cb)), target);
    return add(l1, l2);
  };
  const auto loss_value = [&]() {
    Tape<double> t;
    return static_cast<double>(loss_graph(t).value()[0]);
  };

  model.zero_grads();
  {
    Tape<double> t;
    t.backward(loss_graph(t), 1.0);
  }

  bool ok = true;
  for (Param<double>* p : model.params()) {
    double worst = 0.0;
    for (Index i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value[i];
      const double h = 1e-6 * std::max(1.0, std::abs(saved));
      p->value[i] = saved + h;
      const double up = loss_value();
      p->value[i] = saved - h;
      const double down = loss_value();
      p->value[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = p->grad[i];
      const double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
      worst = std::max(worst, err);
    }
    std::cout << "param " << p->name << " max_err " << fmt_g(worst, "%.3e") << "\n";
    if (!(worst < tol)) ok = false;
  }
  std::cout << (ok ? "grad-check passed" : "grad-check FAILED") << " at tol "
            << fmt_g(tol, "%g") << "\n";
  if (!ok) throw std::runtime_error("finite-difference gradient check failed");
  return 0;
}

}  // namespace

GenDataSettings resolve_gen_data(const Config& cfg) {
  GenDataSettings s;
  GeneratorConfig& g = s.gen;
  g.classes = cfg.get_int("generator.classes", g.classes);
  g.frames = cfg.get_int("generator.frames", g.frames);
  g.mel_bins = cfg.get_int("generator.mel_bins", g.mel_bins);
  g.frames_per_second = cfg.get_double("generator.frames_per_second", g.frames_per_second);
  g.seed = static_cast<std::uint64_t>(cfg.get_int("generator.seed", 0));
  g.events_min = cfg.get_int("generator.events_min", g.events_min);
  g.events_max = cfg.get_int("generator.events_max", g.events_max);
  g.event_min_frac = cfg.get_double("generator.event_min_frac", g.event_min_frac);
  g.event_max_frac = cfg.get_double("generator.event_max_frac", g.event_max_frac);
  g.white_floor = cfg.get_double("generator.white_floor", g.white_floor);
  g.texture_power = cfg.get_double("generator.texture_power", g.texture_power);
  g.event_power = cfg.get_double("generator.event_power", g.event_power);

  g.rho.assign(static_cast<std::size_t>(g.classes * g.classes), 0.0);
  g.beta.assign(static_cast<std::size_t>(g.classes), BackgroundAssociation{});
  const double rho = cfg.get_double("generator.confound_rho", 0.9);
  const Index ca = cfg.get_int("generator.confound_a", 0);
  const Index cb = cfg.get_int("generator.confound_b", 1);
  if (rho > 0.0 && ca != cb && ca >= 0 && cb >= 0 && ca < g.classes && cb < g.classes)
    g.set_rho(ca, cb, rho);
  const double strength = cfg.get_double("generator.background_strength", 0.9);
  const Index bg_class = cfg.get_int("generator.background_class", 2);
  const Index bg_texture = cfg.get_int("generator.background_texture", 2);
  if (strength > 0.0 && bg_class >= 0 && bg_class < g.classes)
    g.beta[static_cast<std::size_t>(bg_class)] =
        BackgroundAssociation{static_cast<int>(bg_texture), strength};

  s.n_train = cfg.get_int("dataset.n_train", s.n_train);
  s.n_eval_confounded = cfg.get_int("dataset.n_eval_confounded", s.n_eval_confounded);
  s.n_eval_decorrelated = cfg.get_int("dataset.n_eval_decorrelated", s.n_eval_decorrelated);
  return s;
}

std::vector<CompareRow> aggregate_runs(const std::string& out_dir) {
  // (split, metric) -> variant -> values over seeds.
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> cells;
  const fs::path runs = fs::path(out_dir) / "runs";
  if (fs::exists(runs)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(runs))
      if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const fs::path& dir : dirs) {
      const fs::path csv = dir / "metrics.csv";
      if (!fs::exists(csv)) continue;
      std::ifstream in(csv);
      std::string line;
      std::getline(in, line);
      if (line != metrics_csv_header())
        throw std::runtime_error("unexpected header in " + csv.string() + ": '" + line + "'");
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string variant, seed, split, metric, value;
        if (!std::getline(ss, variant, ',') || !std::getline(ss, seed, ',') ||
            !std::getline(ss, split, ',') || !std::getline(ss, metric, ',') ||
            !std::getline(ss, value, ','))
          throw std::runtime_error("bad metrics row in " + csv.string() + ": '" + line + "'");
        cells[{split, metric}][variant].push_back(std::stod(value));
      }
    }
  }

  const auto mean_std = [](const std::vector<double>& v) -> std::pair<double, double> {
    if (v.empty()) return {std::nan(""), std::nan("")};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return {mean, std::sqrt(acc / static_cast<double>(v.size() - 1))};
  };

  std::vector<CompareRow> rows;
  for (const auto& [key, by_variant] : cells) {
    CompareRow row;
    row.split = key.first;
    row.metric = key.second;
    const auto base_it = by_variant.find(variant_name(Variant::kBaseline));
    const auto ci_it = by_variant.find(variant_name(Variant::kCi));
    const auto [bm, bs] =
        mean_std(base_it == by_variant.end() ? std::vector<double>{} : base_it->second);
    const auto [cm, cs] =
        mean_std(ci_it == by_variant.end() ? std::vector<double>{} : ci_it->second);
    row.baseline_mean = bm;
    row.baseline_std = bs;
    row.ci_mean = cm;
    row.ci_std = cs;
    row.delta = cm - bm;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "split,metric,baseline_mean,baseline_std,ci_mean,ci_std,delta\n";
  for (const CompareRow& r : rows)
    out << r.split << "," << r.metric << "," << fmt_g(r.baseline_mean, "%.9g") << ","
        << fmt_g(r.baseline_std, "%.9g") << "," << fmt_g(r.ci_mean, "%.9g") << ","
        << fmt_g(r.ci_std, "%.9g") << "," << fmt_g(r.delta, "%.9g") << "\n";
  return out.str();
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"sedlab: weakly supervised sound event detection laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string ckpt_path;
  std::string variant_str = "both";
  std::string eval_variant = "ci";
  std::string split_str = "both";
  std::string seeds_str = "0,1,2";
  std::string channels_flag;
  std::string out_file;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  std::optional<std::uint64_t> seed_opt;
  std::optional<Index> epochs_opt;
  std::optional<Index> batch_opt;
  std::optional<double> lr_opt;
  int rc = 0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config file (INI)");
  gen->add_option("--out", out_dir, "output dataset directory")->required();
  gen->add_option("--seed", seed_opt, "generator seed (overrides config)");
  gen->callback([&] { rc = cmd_gen_data(config_path, out_dir, seed_opt); });

  CLI::App* train = app.add_subcommand("train", "train baseline and ci variants");
  train->add_option("--config", config_path, "config file (INI)");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "experiment output directory")->required();
  train->add_option("--variant", variant_str, "baseline, ci or both");
  train->add_option("--seeds", seeds_str, "comma-separated seed list");
  train->add_option("--epochs", epochs_opt, "training epochs");
  train->add_option("--batch-size", batch_opt, "clips per optimizer step");
  train->add_option("--lr", lr_opt, "learning rate");
  train->add_option("--channels", channels_flag, "conv widths c1,c2,c3");
  train->callback([&] {
    rc = cmd_train(config_path, data_dir, out_dir, variant_str, seeds_str, epochs_opt,
                   batch_opt, lr_opt, channels_flag);
  });

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the eval splits");
  eval->add_option("--config", config_path, "config file (INI)");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--variant", eval_variant, "baseline or ci");
  eval->add_option("--split", split_str, "confounded, decorrelated or both");
  eval->add_option("--seed", seed, "seed label for the emitted rows");
  eval->callback(
      [&] { rc = cmd_eval(config_path, data_dir, ckpt_path, eval_variant, split_str, seed); });

  CLI::App* compare = app.add_subcommand("compare", "aggregate runs into a comparison table");
  compare->add_option("--runs", out_dir, "experiment output directory")->required();
  compare->callback([&] { rc = cmd_compare(out_dir); });

  CLI::App* oracles =
      app.add_subcommand("validate-oracles", "compare k-pass and single-pass intervention paths");
  oracles->add_option("--data", data_dir, "dataset directory")->required();
  oracles->add_option("--checkpoint", ckpt_path, "checkpoint file (default: random frozen net)");
  oracles->add_option("--seed", seed, "seed for the random frozen network");
  oracles->add_option("--channels", channels_flag, "conv widths for the random network");
  oracles->add_option("--out", out_file, "per-clip CSV output file (default: stdout)");
  oracles->callback([&] {
    rc = cmd_validate_oracles(data_dir, ckpt_path, seed,
                              channels_flag.empty() ? "4,6,8" : channels_flag, out_file);
  });

  CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
  grad->add_option("--seed", seed, "seed for the model and data");
  grad->add_option("--tol", tol, "max allowed relative error");
  grad->callback([&] { rc = cmd_grad_check(seed, tol); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

}  // namespace sedlab

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

// End-to-end release gate. Each criterion prints exactly one PASS or
// FAIL line with measured evidence; the process exits nonzero when any
// criterion fails. Criteria are independent: a failure does not stop
// the remaining ones from running.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "sedlab/causal.hpp"
#include "sedlab/checkpoint.hpp"
#include "sedlab/cli.hpp"
#include "sedlab/fdcheck.hpp"
#include "sedlab/manifest.hpp"
#include "sedlab/metrics.hpp"
#include "sedlab/model.hpp"
#include "sedlab/rng.hpp"
#include "sedlab/synth.hpp"
#include "sedlab/tape.hpp"
#include "sedlab/tensor.hpp"
#include "sedlab/tensorfile.hpp"
#include "sedlab/train_core.hpp"
#include "sedlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace sedlab;

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "sedlab_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

int run_cli_quiet(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"sedlab"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream sink;
  std::streambuf* old = std::cout.rdbuf(sink.rdbuf());
  int rc = -1;
  try {
    rc = cli_main(static_cast<int>(argv.size()), argv.data());
  } catch (...) {
    std::cout.rdbuf(old);
    throw;
  }
  std::cout.rdbuf(old);
  return rc;
}

// ---------------------------------------------------------------------
// Criterion 1: the gradient suite. Every tape operator and the composed
// dual-branch ci training graph match central finite differences.

using GraphBuilder =
    std::function<Var<double>(Tape<double>&, std::vector<Var<double>>&)>;

// Worst per-input error of analytic vs central-difference gradients,
// under the relative criterion with the absolute escape for identically
// zero gradients.
double check_graph(std::vector<Tensor<double>*> inputs, const GraphBuilder& build) {
  const auto loss_value = [&]() {
    Tape<double> t;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (Tensor<double>* x : inputs) vars.push_back(t.constant(*x));
    return static_cast<double>(build(t, vars).value()[0]);
  };
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> t;
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (Tensor<double>* x : inputs) {
      Tensor<double> leaf = *x;
      leaf.set_requires_grad(true);
      vars.push_back(t.leaf(std::move(leaf)));
    }
    t.backward(build(t, vars), 1.0);
    for (Var<double>& v : vars) analytic.push_back(v.grad());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor<double> fd = finite_diff_grad(*inputs[i], loss_value, 1e-6);
    const GradErrorStats st = compare_grads(analytic[i], fd);
    worst = std::max(worst, std::min(st.l2_rel, st.max_abs));
  }
  return worst;
}

std::string criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(mix_seed(1, "c1_ops"));

  double worst_op = 0.0;
  int ops = 0;
  const auto op = [&](const char* name, std::vector<Tensor<double>*> inputs,
                      const GraphBuilder& build) {
    const double err = check_graph(std::move(inputs), build);
    require(err < 1e-6, std::string("operator ") + name + " gradient error " +
                            fmt("%.3e", err) + " exceeds 1e-6");
    worst_op = std::max(worst_op, err);
    ++ops;
  };

  Tensor<double> a23 = random_tensor(rng, {2, 3});
  Tensor<double> b23 = random_tensor(rng, {2, 3});
  Tensor<double> a34 = random_tensor(rng, {3, 4});
  Tensor<double> b42 = random_tensor(rng, {4, 2});
  op("add", {&a23, &b23},
     [](Tape<double>&, auto& v) { return sum(add(v[0], v[1])); });
  op("mul", {&a23, &b23},
     [](Tape<double>&, auto& v) { return sum(mul(v[0], v[1])); });
  op("scale", {&a23},
     [](Tape<double>&, auto& v) { return sum(scale(v[0], 1.7)); });
  op("sum", {&a23}, [](Tape<double>&, auto& v) { return sum(mul(v[0], v[0])); });
  op("matmul", {&a34, &b42},
     [](Tape<double>&, auto& v) { return sum(matmul(v[0], v[1])); });

  Tensor<double> x35 = random_tensor(rng, {3, 5});
  Tensor<double> w23 = random_tensor(rng, {2, 3});
  Tensor<double> bias2 = random_tensor(rng, {2});
  op("conv1x1", {&x35, &w23, &bias2}, [](Tape<double>&, auto& v) {
    return sum(conv1x1(v[0], v[1], v[2]));
  });

  // Inputs pushed away from the relu kink, where the subgradient choice
  // would dominate the finite-difference error.
  Tensor<double> akink = random_tensor(rng, {3, 4});
  for (Index i = 0; i < akink.numel(); ++i)
    if (std::abs(akink[i]) < 0.1) akink[i] = 0.5;
  op("relu", {&akink},
     [](Tape<double>&, auto& v) { return sum(relu(v[0])); });
  op("sigmoid", {&a23},
     [](Tape<double>&, auto& v) { return sum(sigmoid(v[0])); });

  Tensor<double> a36 = random_tensor(rng, {3, 6});
  op("mean_rows", {&a36}, [](Tape<double>&, auto& v) {
    return sum(mul(mean_rows(v[0]), mean_rows(v[0])));
  });
  Tensor<double> a245 = random_tensor(rng, {2, 4, 5});
  op("mean_over_h", {&a245}, [](Tape<double>&, auto& v) {
    return sum(mul(mean_over_h(v[0]), mean_over_h(v[0])));
  });
  op("avg_pool_h", {&a245}, [](Tape<double>&, auto& v) {
    Var<double> p = avg_pool_h(v[0], 2);
    return sum(mul(p, p));
  });

  Tensor<double> srows = random_tensor(rng, {3, 7});
  Tensor<double> scoef = random_tensor(rng, {3, 7});
  op("standardize_rows", {&srows, &scoef}, [](Tape<double>&, auto& v) {
    return sum(mul(standardize_rows(v[0], 1e-5), v[1]));
  });
  Tensor<double> scols = random_tensor(rng, {2, 5, 4});
  Tensor<double> scols_coef = random_tensor(rng, {2, 5, 4});
  op("standardize_h", {&scols, &scols_coef}, [](Tape<double>&, auto& v) {
    return sum(mul(standardize_h(v[0], 1e-5), v[1]));
  });

  Tensor<double> ximg = random_tensor(rng, {2, 6, 5});
  Tensor<double> wimg = random_tensor(rng, {3, 2, 3, 3});
  Tensor<double> bimg = random_tensor(rng, {3});
  op("conv2d", {&ximg, &wimg, &bimg}, [](Tape<double>&, auto& v) {
    return sum(conv2d(v[0], v[1], v[2], 1, 1));
  });

  Tensor<double> logits = random_tensor(rng, {4});
  Tensor<double> target = Tensor<double>::from({4}, {0.0, 1.0, 1.0, 0.0});
  op("bce_loss", {&logits}, [target](Tape<double>&, auto& v) {
    return bce_loss(sigmoid(v[0]), target);
  });

  // Composed end-to-end ci graph: dual-branch loss with a frozen warmed
  // pool, feature width c = 8, n = 16 frames, k = 3 classes. Checked
  // against finite differences for every model parameter.
  ModelConfig mc;
  mc.mel_bins = 16;
  mc.classes = 3;
  mc.channels = {4, 6, 8};
  const Index frames = 16;
  Model<double> model(mc);
  model.init(mix_seed(1, "c1_model"));
  Rng proj_rng(mix_seed(1, "c1_proj"));
  for (Index i = 0; i < model.proj.w.value.numel(); ++i)
    model.proj.w.value[i] = proj_rng.normal(0.0, 0.1);
  for (Index i = 0; i < model.proj.b.value.numel(); ++i)
    model.proj.b.value[i] = proj_rng.normal(0.0, 0.1);

  ContextPool<double> pool(mc.classes, frames);
  Rng pool_rng(mix_seed(1, "c1_pool"));
  Tensor<double> m(Shape{mc.classes, frames});
  for (int warm = 0; warm < 3; ++warm) {
    for (Index i = 0; i < m.numel(); ++i) m[i] = pool_rng.uniform();
    pool.update(m, {0, 1, 2});
  }

  Rng data_rng(mix_seed(1, "c1_spec"));
  Tensor<double> spec(Shape{1, mc.mel_bins, frames});
  for (Index i = 0; i < spec.numel(); ++i) spec[i] = data_rng.uniform(-2.0, 2.0);
  const std::vector<int> weak = {0, 2};
  const Tensor<double> target_vec = weak_target<double>(weak, mc.classes);
  const Tensor<double> mask = scaled_mask(target_vec, mc.classes);

  const auto loss_graph = [&](Tape<double>& t) {
    Var<double> x = model.backbone.forward(t, t.constant(spec));
    Var<double> cw = t.param(model.classifier.w);
    Var<double> cb = t.param(model.classifier.b);
    Var<double> l1 = bce_loss(aggregate_clip(frame_scores(t, x, cw, cb)), target_vec);
    Var<double> xe =
        enhance(t, x, pool.q, mask, t.param(model.proj.w), t.param(model.proj.b));
    Var<double> l2 = bce_loss(aggregate_clip(frame_scores(t, xe, cw, cb)), target_vec);
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
  double worst_composed = 0.0;
  Index composed_params = 0;
  for (Param<double>* p : model.params()) {
    const Tensor<double> fd = finite_diff_grad(p->value, loss_value, 1e-6);
    const GradErrorStats st = compare_grads(p->grad, fd);
    const double err = std::min(st.l2_rel, st.max_abs);
    require(err < 1e-6, "composed ci graph: parameter " + p->name + " gradient error " +
                            fmt("%.3e", err) + " exceeds 1e-6");
    worst_composed = std::max(worst_composed, err);
    composed_params += p->value.numel();
  }

  const double elapsed = seconds_since(t0);
  require(elapsed < 60.0, "gradient suite took " + fmt("%.1f", elapsed) + " s, budget 60 s");
  return std::to_string(ops) + " operators worst err " + fmt("%.2e", worst_op) +
         "; composed ci graph (c=8, n=16, k=3, " + std::to_string(composed_params) +
         " parameters) worst err " + fmt("%.2e", worst_composed) + "; " +
         fmt("%.1f", elapsed) + " s of 60 s";
}

// ---------------------------------------------------------------------
// Criterion 2: the k-pass intervention oracle against the single-pass
// path: exact identities in the degenerate cases, then deviation and
// runtime statistics for k = 6 random frozen networks on real clips.

std::string criterion_oracles(const std::string& data_dir) {
  // k = 1: the uniform prior is 1, so the two paths are the same
  // computation.
  Rng rng(mix_seed(2, "c2_k1"));
  double k1_max = 0.0;
  for (int it = 0; it < 5; ++it) {
    ModelConfig mc;
    mc.mel_bins = 16;
    mc.classes = 1;
    mc.channels = {2, 3, 4};
    Model<double> model(mc);
    model.init(mix_seed(2, "c2_k1_model", static_cast<std::uint64_t>(it)));
    for (Index i = 0; i < model.proj.w.value.numel(); ++i)
      model.proj.w.value[i] = rng.uniform(-0.3, 0.3);
    for (Index i = 0; i < model.proj.b.value.numel(); ++i)
      model.proj.b.value[i] = rng.uniform(-0.1, 0.1);
    ContextPool<double> pool(1, 12);
    pool.update(random_tensor(rng, {1, 12}, 0.0, 1.0), {0});
    const Tensor<double> x = random_tensor(rng, {4, 12});
    const Tensor<double> exact = exact_backdoor(x, pool, model);
    const Tensor<double> approx =
        approx_backdoor(x, pool, Tensor<double>::full({1}, 1.0), model);
    k1_max = std::max(k1_max, std::abs(exact[0] - approx[0]));
  }
  require(k1_max < 1e-12, "k=1 deviation " + fmt("%.3e", k1_max) + " exceeds 1e-12");

  // All pool rows equal with matched projection columns: every one-hot
  // pass computes the same enhancement, so the k-pass average collapses
  // to the single uniform-mask pass.
  Rng drng(mix_seed(2, "c2_degenerate"));
  const Index dk = 4, dc = 3, dn = 10;
  ModelConfig dmc;
  dmc.mel_bins = 16;
  dmc.classes = dk;
  dmc.channels = {2, 3, dc};
  Model<double> dmodel(dmc);
  dmodel.init(mix_seed(2, "c2_deg_model"));
  for (Index i = 0; i < dmodel.proj.w.value.numel(); ++i)
    dmodel.proj.w.value[i] = drng.uniform(-0.3, 0.3);
  for (Index i = 0; i < dmodel.proj.b.value.numel(); ++i)
    dmodel.proj.b.value[i] = drng.uniform(-0.1, 0.1);
  for (Index i = 0; i < dc; ++i)
    for (Index j = 1; j < dk; ++j)
      dmodel.proj.w.value.mat()(i, j) = dmodel.proj.w.value.mat()(i, 0);
  ContextPool<double> dpool(dk, dn);
  Tensor<double> common = random_tensor(drng, {1, dn}, 0.0, 1.0);
  Tensor<double> rows(Shape{dk, dn});
  for (Index j = 0; j < dk; ++j) rows.mat().row(j) = common.mat().row(0);
  dpool.update(rows, {0, 1, 2, 3});
  const Tensor<double> dx = random_tensor(drng, {dc, dn});
  const Tensor<double> dexact = exact_backdoor(dx, dpool, dmodel);
  const Tensor<double> dapprox =
      approx_backdoor(dx, dpool, Tensor<double>::full({dk}, 1.0), dmodel);
  double deg_max = 0.0;
  for (Index i = 0; i < dk; ++i)
    deg_max = std::max(deg_max, std::abs(dexact[i] - dapprox[i]));
  require(deg_max < 1e-12,
          "degenerate-pool deviation " + fmt("%.3e", deg_max) + " exceeds 1e-12");

  // k = 6 random frozen networks on the benchmark eval clips: report
  // deviation statistics and require the single pass to run in under
  // half the k-pass time.
  const Dataset data = load_dataset(data_dir);
  require(!data.eval_confounded.empty(), "benchmark dataset has no eval clips");
  double worst_ratio = 1e30;
  double max_dev = 0.0, mean_dev = 0.0, median_dev = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    ModelConfig mc;
    mc.mel_bins = data.mel_bins;
    mc.classes = data.classes;
    mc.channels = {4, 6, 8};
    Model<float> net(mc);
    net.init(mix_seed(seed, "c2_k6_model"));
    Rng prng(mix_seed(seed, "c2_k6_proj"));
    for (Index i = 0; i < net.proj.w.value.numel(); ++i)
      net.proj.w.value[i] = static_cast<float>(prng.normal(0.0, 0.1));
    for (Index i = 0; i < net.proj.b.value.numel(); ++i)
      net.proj.b.value[i] = static_cast<float>(prng.normal(0.0, 0.1));
    ContextPool<float> pool(data.classes, data.frames);
    Rng qrng(mix_seed(seed, "c2_k6_pool"));
    Tensor<float> m(Shape{data.classes, data.frames});
    std::vector<Index> all(static_cast<std::size_t>(data.classes));
    for (Index c = 0; c < data.classes; ++c) all[static_cast<std::size_t>(c)] = c;
    for (int warm = 0; warm < 3; ++warm) {
      for (Index i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(qrng.uniform());
      pool.update(m, all);
    }
    const OracleReport report = oracle_report(net, pool, data.eval_confounded);
    worst_ratio = std::min(worst_ratio, report.runtime_ratio);
    max_dev = std::max(max_dev, report.overall_max_abs);
    mean_dev = std::max(mean_dev, report.overall_mean_abs);
    median_dev = std::max(median_dev, report.median_max_abs);
  }
  require(worst_ratio > 2.0, "k-pass over single-pass runtime ratio " +
                                 fmt("%.2f", worst_ratio) + " is not above 2");
  return "k=1 dev " + fmt("%.1e", k1_max) + ", degenerate-pool dev " + fmt("%.1e", deg_max) +
         "; k=6 over 3 nets x " + std::to_string(data.eval_confounded.size()) +
         " clips: max dev " + fmt("%.3e", max_dev) + ", mean dev " + fmt("%.3e", mean_dev) +
         ", median per-clip max " + fmt("%.3e", median_dev) + ", worst runtime ratio " +
         fmt("%.1f", worst_ratio) + "x";
}

// ---------------------------------------------------------------------
// Criterion 3: metric implementations against independent brute-force
// references on random tiny instances.

F1Counts oracle_segment_counts(const BinaryGrid& pred, const std::vector<Event>& refs,
                               Index frames, Index segment_len) {
  F1Counts counts;
  const Index k = static_cast<Index>(pred.size());
  const Index segments = (frames + segment_len - 1) / segment_len;
  for (Index s = 0; s < segments; ++s) {
    const Index lo = s * segment_len;
    const Index hi = std::min(frames, lo + segment_len);
    for (Index c = 0; c < k; ++c) {
      bool ref_pos = false;
      for (const Event& e : refs)
        if (e.cls == c && e.onset < hi && e.offset > lo) ref_pos = true;
      bool pred_pos = false;
      for (Index t = lo; t < hi; ++t)
        if (pred[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)]) pred_pos = true;
      if (ref_pos && pred_pos) ++counts.tp;
      else if (pred_pos) ++counts.fp;
      else if (ref_pos) ++counts.fn;
    }
  }
  return counts;
}

bool events_compatible(const Event& p, const Event& r, Index collar, double frac) {
  if (p.cls != r.cls) return false;
  const double offset_tol =
      std::max(static_cast<double>(collar), frac * static_cast<double>(r.duration()));
  return std::llabs(p.onset - r.onset) <= collar &&
         static_cast<double>(std::llabs(p.offset - r.offset)) <= offset_tol;
}

// Maximum bipartite matching by augmenting paths, the optimal reference
// for the greedy event matcher.
std::int64_t oracle_max_matching(const std::vector<Event>& preds, const std::vector<Event>& refs,
                                 Index collar, double frac) {
  const std::size_t np = preds.size();
  const std::size_t nr = refs.size();
  std::vector<std::vector<std::size_t>> adj(np);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nr; ++j)
      if (events_compatible(preds[i], refs[j], collar, frac)) adj[i].push_back(j);
  std::vector<int> ref_match(nr, -1);
  std::vector<bool> visited;
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (std::size_t j : adj[i]) {
      if (visited[j]) continue;
      visited[j] = true;
      if (ref_match[j] < 0 || augment(static_cast<std::size_t>(ref_match[j]))) {
        ref_match[j] = static_cast<int>(i);
        return true;
      }
    }
    return false;
  };
  std::int64_t matched = 0;
  for (std::size_t i = 0; i < np; ++i) {
    visited.assign(nr, false);
    if (augment(i)) ++matched;
  }
  return matched;
}

// Rank-enumeration average precision with the stable tie order.
std::optional<double> oracle_average_precision(const std::vector<double>& scores,
                                               const std::vector<std::uint8_t>& labels) {
  const std::size_t n = scores.size();
  std::int64_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  if (positives == 0) return std::nullopt;
  std::vector<std::int64_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int64_t r = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (scores[j] > scores[i]) ++r;
      else if (scores[j] == scores[i] && j < i) ++r;
    }
    rank[i] = r;
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i]) continue;
    std::int64_t pos_at_or_above = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j] && rank[j] <= rank[i]) ++pos_at_or_above;
    ap += static_cast<double>(pos_at_or_above) / static_cast<double>(rank[i]);
  }
  return ap / static_cast<double>(positives);
}

std::string criterion_metric_oracles() {
  int mismatches = 0;

  // segment_f1 against interval enumeration.
  {
    Rng rng(mix_seed(3, "c3_segment"));
    for (int trial = 0; trial < 1000; ++trial) {
      const Index k = rng.uniform_int(1, 3);
      const Index n = rng.uniform_int(4, 12);
      BinaryGrid pred(static_cast<std::size_t>(k),
                      std::vector<std::uint8_t>(static_cast<std::size_t>(n)));
      for (auto& row : pred)
        for (auto& v : row) v = rng.bernoulli(0.35) ? 1 : 0;
      std::vector<Event> refs;
      const Index n_refs = rng.uniform_int(0, 3);
      for (Index i = 0; i < n_refs; ++i) {
        const Index onset = rng.uniform_int(0, n - 1);
        refs.push_back(Event{static_cast<int>(rng.uniform_int(0, k - 1)), onset,
                             rng.uniform_int(onset + 1, n)});
      }
      const F1Counts got = segment_counts(pred, refs, n, 4);
      const F1Counts want = oracle_segment_counts(pred, refs, n, 4);
      if (got.tp != want.tp || got.fp != want.fp || got.fn != want.fn ||
          got.f1() != want.f1())
        ++mismatches;
    }
    require(mismatches == 0,
            "segment_f1: " + std::to_string(mismatches) + " of 1000 instances mismatched");
  }

  // event_f1 against optimal bipartite matching. Reference onsets within
  // a class are spaced beyond twice the collar so the greedy matcher's
  // optimum is well defined.
  {
    Rng rng(mix_seed(3, "c3_event"));
    const Index collar = 2;
    const double frac = 0.2;
    for (int trial = 0; trial < 1000; ++trial) {
      const Index k = rng.uniform_int(1, 3);
      std::vector<Event> refs, preds;
      for (Index c = 0; c < k; ++c) {
        const Index n_refs = rng.uniform_int(0, 3);
        for (Index i = 0; i < n_refs; ++i) {
          const Index onset = i * (2 * collar + 2) + rng.uniform_int(0, 1);
          const Index dur = rng.uniform_int(3, 8);
          refs.push_back(Event{static_cast<int>(c), onset, onset + dur});
          if (rng.bernoulli(0.8)) {
            const Index ponset = std::max<Index>(0, onset + rng.uniform_int(-3, 3));
            const Index pdur = std::max<Index>(1, dur + rng.uniform_int(-2, 2));
            preds.push_back(Event{static_cast<int>(c), ponset, ponset + pdur});
          }
        }
        if (rng.bernoulli(0.3)) {
          const Index onset = 40 + rng.uniform_int(0, 10);
          preds.push_back(Event{static_cast<int>(c), onset, onset + rng.uniform_int(2, 6)});
        }
      }
      const F1Counts got = event_counts(preds, refs, collar, frac);
      const std::int64_t best = oracle_max_matching(preds, refs, collar, frac);
      F1Counts want;
      want.tp = best;
      want.fp = static_cast<std::int64_t>(preds.size()) - best;
      want.fn = static_cast<std::int64_t>(refs.size()) - best;
      if (got.tp != want.tp || got.fp != want.fp || got.fn != want.fn ||
          got.f1() != want.f1())
        ++mismatches;
    }
    require(mismatches == 0,
            "event_f1: " + std::to_string(mismatches) + " of 1000 instances mismatched");
  }

  // average_precision against rank enumeration, with heavy score ties.
  // The reference accumulates per-positive precisions in index order,
  // the implementation in rank order, so agreement is to 1e-12 relative
  // rather than bit-exact.
  {
    Rng rng(mix_seed(3, "c3_ap"));
    for (int trial = 0; trial < 1000; ++trial) {
      const Index n = rng.uniform_int(1, 12);
      std::vector<double> scores;
      std::vector<std::uint8_t> labels;
      for (Index i = 0; i < n; ++i) {
        scores.push_back(static_cast<double>(rng.uniform_int(0, 4)) / 4.0);
        labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
      }
      const std::optional<double> got = average_precision(scores, labels);
      const std::optional<double> want = oracle_average_precision(scores, labels);
      if (got.has_value() != want.has_value() ||
          (got.has_value() && std::abs(*got - *want) > 1e-12 * std::max(1.0, *want)))
        ++mismatches;
    }
    require(mismatches == 0, "average_precision: " + std::to_string(mismatches) +
                                 " of 1000 instances mismatched");
  }

  // at_f1 against a direct micro recount of clip-level threshold hits.
  {
    Rng rng(mix_seed(3, "c3_at"));
    const MetricsConfig mcfg;
    for (int trial = 0; trial < 1000; ++trial) {
      const Index k = rng.uniform_int(1, 4);
      const Index clips = rng.uniform_int(1, 5);
      EvalAccumulator acc(k, mcfg);
      F1Counts want;
      for (Index clip = 0; clip < clips; ++clip) {
        Tensor<double> frames({k, 4});
        for (Index i = 0; i < frames.numel(); ++i) frames[i] = rng.uniform();
        std::vector<double> clip_scores;
        std::vector<int> weak;
        for (Index c = 0; c < k; ++c) {
          clip_scores.push_back(rng.uniform());
          if (rng.bernoulli(0.4)) weak.push_back(static_cast<int>(c));
        }
        acc.add_clip(frames, clip_scores, weak, {});
        for (Index c = 0; c < k; ++c) {
          const bool pred = clip_scores[static_cast<std::size_t>(c)] > mcfg.theta;
          const bool pos =
              std::find(weak.begin(), weak.end(), static_cast<int>(c)) != weak.end();
          if (pred && pos) ++want.tp;
          else if (pred) ++want.fp;
          else if (pos) ++want.fn;
        }
      }
      const EvalResult r = acc.result();
      if (!r.at_f1.has_value() || *r.at_f1 != want.f1()) ++mismatches;
    }
    require(mismatches == 0,
            "at_f1: " + std::to_string(mismatches) + " of 1000 instances mismatched");
  }

  return "segment_f1, event_f1, average_precision, at_f1: 4000 instances, 0 mismatches";
}

// ---------------------------------------------------------------------
// Criterion 4: with the projection at its zero initialization, the ci
// evaluation path is bit-identical to the baseline path on the same
// checkpointed backbone.

std::string criterion_identity_at_init(const std::string& data_dir) {
  const Dataset data = load_dataset(data_dir);
  ModelConfig mc;
  mc.mel_bins = data.mel_bins;
  mc.classes = data.classes;
  mc.channels = {4, 6, 8};
  Model<float> source(mc);
  source.init(4242);  // proj stays zero-initialized
  ContextPool<float> source_pool(data.classes, data.frames);
  Rng qrng(mix_seed(4, "c4_pool"));
  Tensor<float> m(Shape{data.classes, data.frames});
  std::vector<Index> all(static_cast<std::size_t>(data.classes));
  for (Index c = 0; c < data.classes; ++c) all[static_cast<std::size_t>(c)] = c;
  for (int warm = 0; warm < 3; ++warm) {
    for (Index i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(qrng.uniform());
    source_pool.update(m, all);
  }

  const std::string ckpt_path = (work_dir() / "c4.ckpt").string();
  Checkpoint ck;
  ck.fingerprint = config_fingerprint(mc, data.frames);
  for (Param<float>* p : source.params()) ck.tensors.emplace_back(p->name, p->value);
  ck.tensors.emplace_back("context_pool.q", source_pool.q);
  save_checkpoint(ckpt_path, ck);

  const Checkpoint loaded = load_checkpoint(ckpt_path, ck.fingerprint);
  Model<float> model(mc);
  for (Param<float>* p : model.params()) {
    const Tensor<float>* stored = loaded.find(p->name);
    require(stored != nullptr, "checkpoint is missing " + p->name);
    p->value = *stored;
  }
  ContextPool<float> pool(data.classes, data.frames);
  pool.q = *loaded.find("context_pool.q");

  std::vector<EvalClipData> clips(data.eval_confounded.begin(),
                                  data.eval_confounded.begin() +
                                      std::min<std::size_t>(100, data.eval_confounded.size()));
  const MetricsConfig mcfg;
  const EvalResult ci = evaluate_split(model, pool, clips, Variant::kCi, mcfg);
  const EvalResult base = evaluate_split(model, pool, clips, Variant::kBaseline, mcfg);

  std::ostringstream ci_rows, base_rows;
  append_metric_rows(ci_rows, "v", 0, "s", ci);
  append_metric_rows(base_rows, "v", 0, "s", base);
  const std::string ci_text = ci_rows.str();
  require(ci_text == base_rows.str(),
          "serialized metric rows differ between ci and baseline");
  require(ci.per_class_event_f1 == base.per_class_event_f1,
          "per-class event F1 differs between ci and baseline");
  return "ci and baseline evaluation rows byte-identical over " +
         std::to_string(clips.size()) + " clips (" +
         std::to_string(std::count(ci_text.begin(), ci_text.end(), '\n')) +
         " metric rows)";
}

// ---------------------------------------------------------------------
// Criterion 5: the confounding benchmark. On the default dataset the ci
// variant must beat the baseline on the decorrelated split.

std::string criterion_benchmark(std::string* data_dir_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path data_dir = work_dir() / "benchmark_data";
  const fs::path out_dir = work_dir() / "benchmark_runs";
  emit_dataset(default_generator_config(), 2000, 300, 300, data_dir.string());
  *data_dir_out = data_dir.string();

  ExperimentConfig ec;
  ec.data_dir = data_dir.string();
  ec.out_dir = out_dir.string();
  run_experiment(ec);

  const std::vector<CompareRow> rows = aggregate_runs(ec.out_dir);
  const auto cell = [&](const std::string& metric) -> const CompareRow& {
    for (const CompareRow& r : rows)
      if (r.split == kSplitEvalDecorrelated && r.metric == metric) return r;
    throw CheckFailure("metric " + metric + " missing from aggregated runs");
  };
  const CompareRow& seg = cell("seg_f1");
  const CompareRow& event = cell("event_f1");
  const CompareRow& pair0 = cell("event_f1_class_0");
  const CompareRow& pair1 = cell("event_f1_class_1");

  const double elapsed = seconds_since(t0);
  // The 10 minute budget assumes 8 hardware threads; the training loop
  // is single threaded by design, so fewer cores get a proportional
  // allowance.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const double allowance = 600.0 * std::max(1.0, 8.0 / static_cast<double>(hw));

  require(seg.ci_mean > seg.baseline_mean,
          "decorrelated seg F1: ci mean " + fmt("%.4f", seg.ci_mean) +
              " does not exceed baseline mean " + fmt("%.4f", seg.baseline_mean));
  require(event.ci_mean > event.baseline_mean,
          "decorrelated event F1: ci mean " + fmt("%.4f", event.ci_mean) +
              " does not exceed baseline mean " + fmt("%.4f", event.baseline_mean));
  require(pair0.delta >= 0.02, "confounded-pair class 0 event F1 gain " +
                                   fmt("%.4f", pair0.delta) + " is below 0.02");
  require(pair1.delta >= 0.02, "confounded-pair class 1 event F1 gain " +
                                   fmt("%.4f", pair1.delta) + " is below 0.02");
  require(elapsed < allowance, "experiment took " + fmt("%.0f", elapsed) +
                                   " s, allowance " + fmt("%.0f", allowance) + " s on " +
                                   std::to_string(hw) + " threads");
  return "3 seeds, decorrelated split: seg F1 " + fmt("%.3f", seg.baseline_mean) + " -> " +
         fmt("%.3f", seg.ci_mean) + ", event F1 " + fmt("%.3f", event.baseline_mean) +
         " -> " + fmt("%.3f", event.ci_mean) + ", pair event F1 gains " +
         fmt("%.3f", pair0.delta) + "/" + fmt("%.3f", pair1.delta) + " (>= 0.02); " +
         fmt("%.0f", elapsed) + " s on " + std::to_string(hw) + " threads (allowance " +
         fmt("%.0f", allowance) + " s, 8-thread target 600 s)";
}

// ---------------------------------------------------------------------
// Criterion 6: two identically flagged train commands produce
// byte-identical metrics files.

std::string criterion_determinism() {
  const fs::path dir = work_dir() / "determinism";
  GeneratorConfig gen;
  gen.classes = 3;
  gen.frames = 48;
  gen.mel_bins = 32;
  gen.seed = 9;
  gen.rho.assign(9, 0.0);
  gen.set_rho(0, 1, 0.9);
  gen.beta.assign(3, BackgroundAssociation{});
  gen.beta[2] = BackgroundAssociation{2, 0.9};
  const std::string data = (dir / "data").string();
  emit_dataset(gen, 80, 20, 20, data);

  const std::vector<std::string> flags = {"--variant", "both", "--seeds",  "0",
                                          "--epochs",  "4",    "--batch-size", "8",
                                          "--channels", "2,3,4"};
  for (const char* out : {"runA", "runB"}) {
    std::vector<std::string> args = {"train", "--data", data, "--out", (dir / out).string()};
    args.insert(args.end(), flags.begin(), flags.end());
    require(run_cli_quiet(args) == 0, std::string("train command failed for ") + out);
  }
  std::size_t compared = 0;
  for (const char* run : {"baseline_seed0", "ci_seed0"}) {
    const std::string a = (dir / "runA" / "runs" / run / "metrics.csv").string();
    const std::string b = (dir / "runB" / "runs" / run / "metrics.csv").string();
    require(slurp(a) == slurp(b), std::string("metrics.csv differs for ") + run);
    ++compared;
  }
  return std::to_string(compared) + " runs byte-identical across two train invocations";
}

// ---------------------------------------------------------------------
// Criterion 7: pool invariants after a training epoch.

Dataset tiny_memory_dataset(Index classes, Index mel, Index frames, Index clips,
                            std::uint64_t seed, Index max_label) {
  Dataset data;
  data.classes = classes;
  data.frames = frames;
  data.mel_bins = mel;
  Rng rng(seed);
  for (Index i = 0; i < clips; ++i) {
    TrainClipData clip;
    clip.spec3 = Tensor<float>(Shape{1, mel, frames});
    for (Index j = 0; j < clip.spec3.numel(); ++j)
      clip.spec3[j] = static_cast<float>(rng.normal(0.0, 1.0));
    clip.weak.push_back(static_cast<int>(rng.uniform_int(0, max_label)));
    if (rng.bernoulli(0.5)) {
      const int extra = static_cast<int>(rng.uniform_int(0, max_label));
      if (extra != clip.weak[0]) clip.weak.push_back(extra);
    }
    data.train.push_back(std::move(clip));
  }
  return data;
}

std::string criterion_pool_invariants() {
  const Index k = 3, mel = 16, frames = 24;
  // Train labels never mention class 2, so its pool row must stay
  // untouched down to the bit pattern.
  const Dataset data = tiny_memory_dataset(k, mel, frames, 24, 71, 1);

  ModelConfig mc;
  mc.mel_bins = mel;
  mc.classes = k;
  mc.channels = {2, 3, 4};
  Model<float> model(mc);
  model.init(7);
  ContextPool<float> pool(k, frames, 0.01, 1e-5);
  std::vector<float> sentinel(static_cast<std::size_t>(frames));
  for (Index i = 0; i < frames; ++i) {
    sentinel[static_cast<std::size_t>(i)] = static_cast<float>(i) * 0.37f - 2.1f;
    pool.q.mat()(2, i) = sentinel[static_cast<std::size_t>(i)];
  }

  TrainConfig cfg;
  cfg.variant = Variant::kCi;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.channels = mc.channels;
  const TrainSummary summary =
      train_run(model, pool, data, cfg, (work_dir() / "c7_run").string());
  require(summary.pool_updates > 0, "training made no pool updates");

  double worst_mean = 0.0, worst_scale = 0.0;
  for (Index row : {Index{0}, Index{1}}) {
    double s1 = 0.0, s2 = 0.0;
    for (Index i = 0; i < frames; ++i) {
      const double v = static_cast<double>(pool.q.mat()(row, i));
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / static_cast<double>(frames);
    const double var = s2 / static_cast<double>(frames) - mean * mean;
    worst_mean = std::max(worst_mean, std::abs(mean));
    // Rows are stored scaled by 1/sqrt(var + eps); the unit-variance
    // invariant holds under that same floored scale.
    worst_scale = std::max(worst_scale, std::abs(std::sqrt(var + pool.eps) - 1.0));
  }
  require(worst_mean < 1e-6,
          "touched pool row mean " + fmt("%.3e", worst_mean) + " is not 0 within 1e-6");
  require(worst_scale < 1e-6, "touched pool row variance off by " +
                                  fmt("%.3e", worst_scale) + ", not 1 within 1e-6");
  for (Index i = 0; i < frames; ++i)
    require(std::memcmp(&pool.q.mat()(2, i), &sentinel[static_cast<std::size_t>(i)],
                        sizeof(float)) == 0,
            "untouched pool row changed at frame " + std::to_string(i));

  // The pool is not a parameter: no optimizer tensor is named after it,
  // and a run whose update rate is zero leaves a zero pool bit-for-bit
  // zero while the optimizer keeps stepping.
  for (Param<float>* p : model.params())
    require(p->name.rfind("backbone.", 0) == 0 || p->name.rfind("classifier.", 0) == 0 ||
                p->name.rfind("proj.", 0) == 0,
            "unexpected optimizer parameter " + p->name);
  Model<float> frozen(mc);
  frozen.init(7);
  ContextPool<float> zero_pool(k, frames, 0.0, 1e-5);
  const TrainSummary frozen_summary =
      train_run(frozen, zero_pool, data, cfg, (work_dir() / "c7_zero_rate").string());
  require(frozen_summary.optimizer_steps > 0, "zero-rate run made no optimizer steps");
  for (Index i = 0; i < zero_pool.q.numel(); ++i) {
    const float v = zero_pool.q[i];
    require(std::memcmp(&v, "\0\0\0\0", sizeof(float)) == 0,
            "optimizer run wrote the pool at entry " + std::to_string(i));
  }
  return "touched rows: |mean| " + fmt("%.1e", worst_mean) + ", |sqrt(var+eps)-1| " +
         fmt("%.1e", worst_scale) + "; untouched row bit-unchanged; " +
         std::to_string(frozen_summary.optimizer_steps) +
         " optimizer steps wrote zero pool bytes";
}

// ---------------------------------------------------------------------
// Criterion 8: the weak-supervision firewall.

template <typename T>
concept HasEventsMember = requires(T t) { t.events; };

std::string criterion_firewall() {
  static_assert(!HasEventsMember<TrainExample>,
                "TrainExample must not carry event annotations");
  static_assert(HasEventsMember<EvalExample>,
                "EvalExample must carry event annotations");
  static_assert(std::is_same_v<decltype(load_train_examples(std::string{}, std::string{})),
                               std::vector<TrainExample>>,
                "the train loader must return event-free records");

  // Two datasets with identical clips: one train manifest withholds the
  // strong annotations, the other leaks them. Training output must be
  // byte-identical.
  const fs::path root = work_dir() / "firewall";
  const Index k = 3, mel = 16, frames = 24, n_train = 16, n_eval = 4;
  std::vector<std::string> dirs = {(root / "weak_only").string(),
                                   (root / "leaky").string()};
  for (int leaky = 0; leaky < 2; ++leaky) {
    const fs::path dir = dirs[static_cast<std::size_t>(leaky)];
    fs::create_directories(dir / "clips");
    Rng rng(515);  // same seed: identical clips in both datasets
    ManifestWriter w((dir / "manifest.jsonl").string());
    for (Index i = 0; i < n_train + 2 * n_eval; ++i) {
      const bool train = i < n_train;
      const std::string split = train           ? kSplitTrain
                                : i < n_train + n_eval ? kSplitEvalConfounded
                                                       : kSplitEvalDecorrelated;
      char id[32];
      std::snprintf(id, sizeof(id), "clip_%06lld", static_cast<long long>(i));
      Tensor<float> spec(Shape{mel, frames});
      for (Index j = 0; j < spec.numel(); ++j)
        spec[j] = static_cast<float>(rng.normal(0.0, 1.0));
      const std::string file = std::string("clips/") + id + ".slt";
      write_tensor_f32((dir / file).string(), spec);
      const int cls = static_cast<int>(rng.uniform_int(0, k - 1));
      const std::vector<Event> events = {Event{cls, 4, 14}};
      if (train && leaky == 0) {
        w.add_weak(id, split, file, {cls});
      } else {
        w.add_strong(id, split, file, {cls}, events);
      }
    }
    w.close();
    std::ofstream ini((dir / "dataset.ini").string());
    ini << "[dataset]\nclasses = " << k << "\nframes = " << frames
        << "\nmel_bins = " << mel << "\nframes_per_second = 25\n";
  }

  std::vector<std::string> metrics, ckpts;
  for (int leaky = 0; leaky < 2; ++leaky) {
    ExperimentConfig ec;
    ec.data_dir = dirs[static_cast<std::size_t>(leaky)];
    ec.out_dir = (root / (leaky ? "out_leaky" : "out_weak")).string();
    ec.variants = {Variant::kCi};
    ec.seeds = {0};
    ec.base.epochs = 2;
    ec.base.batch_size = 4;
    ec.base.channels = {2, 3, 4};
    const std::vector<RunOutcome> outcomes = run_experiment(ec);
    require(outcomes.size() == 1 && !outcomes[0].skipped, "firewall run did not train");
    metrics.push_back(slurp(outcomes[0].run_dir + "/metrics.csv"));
    ckpts.push_back(slurp(outcomes[0].run_dir + "/checkpoints/last.ckpt"));
  }
  require(metrics[0] == metrics[1], "metrics differ when strong labels are removed");
  require(ckpts[0] == ckpts[1], "checkpoints differ when strong labels are removed");
  return "train records carry no event fields (compile-time); adding strong labels to the "
         "train manifest leaves metrics.csv and last.ckpt byte-identical";
}

}  // namespace

int main() {
  std::string benchmark_data_dir;

  // C5 runs first so its generated dataset can serve C2 and C4; the
  // printed order stays C1..C8.
  struct Line {
    std::string id;
    std::string text;
    bool pass;
  };
  std::vector<Line> lines(8);

  const auto run = [&](int idx, const std::string& id,
                       const std::function<std::string()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::string detail = fn();
      lines[static_cast<std::size_t>(idx)] =
          Line{id, detail + " [" + fmt("%.1f", seconds_since(t0)) + " s]", true};
    } catch (const std::exception& e) {
      lines[static_cast<std::size_t>(idx)] =
          Line{id, std::string(e.what()) + " [" + fmt("%.1f", seconds_since(t0)) + " s]",
               false};
    }
  };

  run(4, "C5", [&] { return criterion_benchmark(&benchmark_data_dir); });
  run(0, "C1", criterion_gradients);
  run(1, "C2", [&] {
    require(!benchmark_data_dir.empty(), "benchmark dataset unavailable (C5 generation failed)");
    return criterion_oracles(benchmark_data_dir);
  });
  run(2, "C3", criterion_metric_oracles);
  run(3, "C4", [&] {
    require(!benchmark_data_dir.empty(), "benchmark dataset unavailable (C5 generation failed)");
    return criterion_identity_at_init(benchmark_data_dir);
  });
  run(5, "C6", criterion_determinism);
  run(6, "C7", criterion_pool_invariants);
  run(7, "C8", criterion_firewall);

  int failures = 0;
  for (const Line& line : lines) {
    std::cout << line.id << (line.pass ? " PASS: " : " FAIL: ") << line.text << "\n";
    if (!line.pass) ++failures;
  }
  std::cout << (failures == 0 ? "acceptance: all criteria passed"
                              : "acceptance: " + std::to_string(failures) +
                                    " criteria failed")
            << "\n";
  return failures == 0 ? 0 : 1;
}

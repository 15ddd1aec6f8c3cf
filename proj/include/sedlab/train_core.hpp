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

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedlab/causal.hpp"
#include "sedlab/metrics.hpp"
#include "sedlab/model.hpp"
#include "sedlab/tape.hpp"

namespace sedlab {

// Scalar-generic training and evaluation steps. The production trainer
// instantiates float; invariant tests instantiate double so tolerances
// in the 1e-12 range are meaningful.

enum class Variant { kBaseline, kCi };

inline std::string variant_name(Variant v) {
  return v == Variant::kBaseline ? "baseline" : "ci";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "baseline") return Variant::kBaseline;
  if (name == "ci") return Variant::kCi;
  throw std::invalid_argument("unknown variant '" + name + "', expected baseline or ci");
}

enum class OptimizerKind { kSgd, kAdam };

inline std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgd ? "sgd" : "adam";
}

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "', expected sgd or adam");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-order optimizer over externally owned parameters. Updates read
// accumulated gradients and leave them in place; callers zero grads per
// batch. Moment tensors live here and round-trip through checkpoints.
template <typename S>
class Optimizer {
 public:
  Optimizer(std::vector<Param<S>*> params, const OptimizerConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    for (Param<S>* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++steps_;
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (Param<S>* p : params_) {
        p->value.data() -= static_cast<S>(cfg_.lr) * p->grad.data();
      }
      return;
    }
    const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param<S>* p = params_[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (Index e = 0; e < p->value.numel(); ++e) {
        const double g = static_cast<double>(p->grad[e]);
        const double mn = cfg_.beta1 * static_cast<double>(m[e]) + (1.0 - cfg_.beta1) * g;
        const double vn = cfg_.beta2 * static_cast<double>(v[e]) + (1.0 - cfg_.beta2) * g * g;
        m[e] = static_cast<S>(mn);
        v[e] = static_cast<S>(vn);
        const double mhat = static_cast<double>(m[e]) / bias1;
        const double vhat = static_cast<double>(v[e]) / bias2;
        p->value[e] =
            static_cast<S>(static_cast<double>(p->value[e]) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t t) { steps_ = t; }
  const std::vector<Param<S>*>& params() const { return params_; }
  Tensor<S>& moment1(std::size_t i) { return m_[i]; }
  Tensor<S>& moment2(std::size_t i) { return v_[i]; }

 private:
  std::vector<Param<S>*> params_;
  OptimizerConfig cfg_;
  std::vector<Tensor<S>> m_;
  std::vector<Tensor<S>> v_;
  std::uint64_t steps_ = 0;
};

template <typename S>
Tensor<S> weak_target(const std::vector<int>& weak, Index classes) {
  Tensor<S> target(Shape{classes});
  for (int cls : weak) {
    if (cls < 0 || cls >= classes) {
      throw std::invalid_argument("weak label " + std::to_string(cls) + " out of class range");
    }
    target[cls] = S(1);
  }
  return target;
}

// The per-class mask feeding the enhanced branch carries the uniform
// 1/k intervention prior, so training (label indicator) and inference
// (branch-1 clip scores) drive the projection at the same scale.
template <typename S>
Tensor<S> scaled_mask(const Tensor<S>& raw, Index classes) {
  Tensor<S> out(Shape{classes});
  for (Index c = 0; c < classes; ++c) {
    out[c] = static_cast<S>(raw[c] / static_cast<S>(classes));
  }
  return out;
}

struct ClipStepResult {
  double loss_total = 0.0;
  double loss_branch1 = 0.0;
  double loss_branch2 = 0.0;
  Index degenerate_rows = 0;
  bool pool_updated = false;
};

// One clip of a training batch: forward both branches, update the pool
// between them (ci variant), backward with the given seed so gradients
// of a B-clip batch accumulate to the batch-mean gradient. The pool
// update happens after the branch-1 forward and before backward, using
// the branch-1 frame predictions and the clip's weak labels.
template <typename S>
ClipStepResult train_clip(Model<S>& model, ContextPool<S>& pool, const Tensor<S>& spec3,
                          const std::vector<int>& weak, Variant variant, S grad_seed) {
  Tape<S> t;
  Var<S> input = t.constant(spec3);
  Var<S> x = model.backbone.forward(t, input);
  Var<S> cw = t.param(model.classifier.w);
  Var<S> cb = t.param(model.classifier.b);
  Var<S> m1 = frame_scores(t, x, cw, cb);
  Var<S> s1 = aggregate_clip(m1);
  const Tensor<S> target = weak_target<S>(weak, model.cfg.classes);
  Var<S> l1 = bce_loss(s1, target);

  ClipStepResult r;
  r.loss_branch1 = static_cast<double>(l1.value()[0]);
  Var<S> total;
  if (variant == Variant::kCi) {
    const std::vector<Index> present(weak.begin(), weak.end());
    r.degenerate_rows = static_cast<Index>(pool.update(m1.value(), present).size());
    r.pool_updated = true;
    Var<S> xe = enhance(t, x, pool.q, scaled_mask(target, model.cfg.classes),
                        t.param(model.proj.w), t.param(model.proj.b));
    Var<S> m2 = frame_scores(t, xe, cw, cb);
    Var<S> s2 = aggregate_clip(m2);
    Var<S> l2 = bce_loss(s2, target);
    r.loss_branch2 = static_cast<double>(l2.value()[0]);
    total = add(l1, l2);
  } else {
    // Doubled so baseline and ci loss curves share a scale.
    r.loss_branch2 = r.loss_branch1;
    total = scale(l1, S(2));
  }
  r.loss_total = static_cast<double>(total.value()[0]);
  t.backward(total, grad_seed);
  return r;
}

// Inference scores of one clip. The baseline variant reports branch-1
// outputs; the ci variant re-enhances with the branch-1 clip scores as
// the soft mask and reports the enhanced outputs. The pool is read,
// never written.
template <typename S>
void eval_clip(Model<S>& model, const ContextPool<S>& pool, const Tensor<S>& spec3,
               Variant variant, Tensor<double>* frame_out, std::vector<double>* clip_out) {
  Tape<S> t;
  Var<S> input = t.constant(spec3);
  Var<S> x = model.backbone.forward(t, input);
  Var<S> cw = t.param(model.classifier.w);
  Var<S> cb = t.param(model.classifier.b);
  Var<S> m1 = frame_scores(t, x, cw, cb);
  Var<S> s1 = aggregate_clip(m1);
  // Node storage may reallocate while the graph grows, so references
  // into the tape are only taken after the last op is appended.
  Var<S> frames = m1;
  Var<S> clips = s1;
  if (variant == Variant::kCi) {
    Var<S> xe = enhance(t, x, pool.q, scaled_mask(s1.value(), model.cfg.classes),
                        t.param(model.proj.w), t.param(model.proj.b));
    frames = frame_scores(t, xe, cw, cb);
    clips = aggregate_clip(frames);
  }
  const Tensor<S>& frame_values = frames.value();
  const Tensor<S>& clip_values = clips.value();
  if (frame_out) *frame_out = Tensor<double>::from_cast(frame_values);
  if (clip_out) {
    clip_out->clear();
    for (Index c = 0; c < clip_values.numel(); ++c) {
      clip_out->push_back(static_cast<double>(clip_values[c]));
    }
  }
}

}  // namespace sedlab

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
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedlab/rng.hpp"
#include "sedlab/tape.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

struct ModelConfig {
  Index mel_bins = 64;
  Index classes = 6;
  // Channel widths of the three conv blocks; the last is the feature width c.
  std::array<Index, 3> channels = {16, 32, 64};
  double standardize_eps = 1e-5;

  Index feature_channels() const { return channels[2]; }
};

// Compact convolutional backbone: three blocks of (3x3 conv, per-frame
// standardization over frequency, relu, 2x frequency pooling), then a
// frequency mean. Time resolution is preserved: [1 x mel x n] -> [c x n].
// Normalization statistics never cross the frame axis; with the 3x3
// kernels this bounds the temporal receptive field of one output frame
// to three input frames per block, so clip-global cues cannot leak into
// frame features.
template <typename S>
struct Backbone {
  ModelConfig cfg;
  Param<S> w1, b1, w2, b2, w3, b3;

  explicit Backbone(const ModelConfig& config) : cfg(config) {
    if (cfg.mel_bins % 8 != 0)
      throw std::invalid_argument("mel_bins must be divisible by 8 for the three 2x pools, got " +
                                  std::to_string(cfg.mel_bins));
    const auto& c = cfg.channels;
    w1 = Param<S>("backbone.w1", Tensor<S>(Shape{c[0], 1, 3, 3}));
    b1 = Param<S>("backbone.b1", Tensor<S>(Shape{c[0]}));
    w2 = Param<S>("backbone.w2", Tensor<S>(Shape{c[1], c[0], 3, 3}));
    b2 = Param<S>("backbone.b2", Tensor<S>(Shape{c[1]}));
    w3 = Param<S>("backbone.w3", Tensor<S>(Shape{c[2], c[1], 3, 3}));
    b3 = Param<S>("backbone.b3", Tensor<S>(Shape{c[2]}));
  }

  // He-style normal fan-in initialization for conv weights, zero biases.
  void init(std::uint64_t seed) {
    for (Param<S>* w : {&w1, &w2, &w3}) {
      Rng rng(mix_seed(seed, w->name));
      const double fan_in = static_cast<double>(w->value.dim(1) * 9);
      const double std_dev = std::sqrt(2.0 / fan_in);
      for (Index i = 0; i < w->value.numel(); ++i)
        w->value[i] = static_cast<S>(rng.normal(0.0, std_dev));
    }
    for (Param<S>* b : {&b1, &b2, &b3}) b->value.data().setZero();
  }

  std::vector<Param<S>*> params() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

  // spec is a [1 x mel_bins x n] node on the tape.
  Var<S> forward(Tape<S>& t, Var<S> spec) {
    const auto& v = spec.value();
    if (v.rank() != 3 || v.dim(0) != 1 || v.dim(1) != cfg.mel_bins)
      throw std::invalid_argument("backbone expects [1 x " + std::to_string(cfg.mel_bins) +
                                  " x n] input, got " + shape_str(v.shape()));
    Var<S> h = spec;
    for (auto [w, b] : {std::pair{&w1, &b1}, std::pair{&w2, &b2}, std::pair{&w3, &b3}}) {
      h = conv2d(h, t.param(*w), t.param(*b), 1, 1);
      h = relu(standardize_h(h, cfg.standardize_eps));
      h = avg_pool_h(h, 2);
    }
    return mean_over_h(h);  // [c x n]
  }
};

// One fully connected layer applied per frame; both classification branches
// alias this single parameter set.
template <typename S>
struct Classifier {
  Param<S> w;  // [k x c]
  Param<S> b;  // [k]

  Classifier(Index classes, Index channels)
      : w("classifier.w", Tensor<S>(Shape{classes, channels})),
        b("classifier.b", Tensor<S>(Shape{classes})) {}

  void init(std::uint64_t seed) {
    Rng rng(mix_seed(seed, w.name));
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(w.value.dim(1)));
    for (Index i = 0; i < w.value.numel(); ++i)
      w.value[i] = static_cast<S>(rng.normal(0.0, std_dev));
    b.value.data().setZero();
  }

  std::vector<Param<S>*> params() { return {&w, &b}; }
};

// 1x1 convolution projecting masked context rows into feature space.
// Zero-initialized so enhancement starts as the identity map.
template <typename S>
struct ProjHead {
  Param<S> w;  // [c x k]
  Param<S> b;  // [c]

  ProjHead(Index channels, Index classes)
      : w("proj.w", Tensor<S>(Shape{channels, classes})),
        b("proj.b", Tensor<S>(Shape{channels})) {}

  std::vector<Param<S>*> params() { return {&w, &b}; }
};

// m[:,t] = sigmoid(W x[:,t] + b), the per-frame predictions M.
template <typename S>
Var<S> frame_scores(Tape<S>& t, Var<S> x, Var<S> clf_w, Var<S> clf_b) {
  if (x.tape != &t || clf_w.tape != &t || clf_b.tape != &t)
    throw std::invalid_argument("frame_scores operands must live on the given tape");
  return sigmoid(conv1x1(x, clf_w, clf_b));
}

// Clip scores by mean pooling over frames: s_i = mean_t m[i,t].
template <typename S>
Var<S> aggregate_clip(Var<S> m) {
  return mean_rows(m);
}

// Full model bundle; the context pool lives outside (it is state, not a
// parameter).
template <typename S>
struct Model {
  ModelConfig cfg;
  Backbone<S> backbone;
  Classifier<S> classifier;
  ProjHead<S> proj;

  explicit Model(const ModelConfig& config)
      : cfg(config),
        backbone(config),
        classifier(config.classes, config.feature_channels()),
        proj(config.feature_channels(), config.classes) {}

  void init(std::uint64_t seed) {
    backbone.init(seed);
    classifier.init(seed);
    // proj stays zero: the enhanced branch starts exactly at the baseline.
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out = backbone.params();
    for (Param<S>* p : classifier.params()) out.push_back(p);
    for (Param<S>* p : proj.params()) out.push_back(p);
    return out;
  }

  void zero_grads() {
    for (Param<S>* p : params()) p->zero_grad();
  }
};

}  // namespace sedlab

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

#include "sedlab/model.hpp"
#include "sedlab/tape.hpp"
#include "sedlab/tensor.hpp"

namespace sedlab {

// Per-class context memory: one accumulated frame pattern per class. The
// pool is training-loop state, not a parameter; it receives no gradient and
// is updated only through update(). Class priors are fixed uniform 1/k.
template <typename S>
struct ContextPool {
  Tensor<S> q;           // [k x n_pool]
  double update_rate;    // scales the prediction row added per update
  double eps;            // variance floor of the row standardization

  ContextPool(Index classes, Index n_pool, double rate = 0.01, double eps_ = 1e-5)
      : q(Shape{classes, n_pool}), update_rate(rate), eps(eps_) {}

  Index classes() const { return q.dim(0); }
  Index frames() const { return q.dim(1); }

  // For each class j in `present`: row_j <- standardize(row_j + rate * m[j,:]).
  // Rows of absent classes are untouched. Returns the indices of rows whose
  // post-sum variance collapsed (all-constant row standardizes to zeros);
  // callers surface these in logs.
  std::vector<Index> update(const Tensor<S>& m, const std::vector<Index>& present) {
    if (m.rank() != 2 || m.dim(0) != classes() || m.dim(1) != frames())
      throw std::invalid_argument("pool update expects predictions [" +
                                  std::to_string(classes()) + " x " +
                                  std::to_string(frames()) + "], got " +
                                  shape_str(m.shape()));
    std::vector<Index> degenerate;
    const Index n = frames();
    auto qm = q.mat();
    auto mm = m.mat();
    std::vector<double> row(static_cast<std::size_t>(n));
    for (Index j : present) {
      if (j < 0 || j >= classes())
        throw std::invalid_argument("pool update: class index " + std::to_string(j) +
                                    " out of range [0," + std::to_string(classes()) + ")");
      double s1 = 0.0, s2 = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double v = static_cast<double>(qm(j, i)) +
                         update_rate * static_cast<double>(mm(j, i));
        row[static_cast<std::size_t>(i)] = v;
        s1 += v;
        s2 += v * v;
      }
      const double mean = s1 / static_cast<double>(n);
      const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
      if (var < 1e-12) degenerate.push_back(j);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (Index i = 0; i < n; ++i)
        qm(j, i) = static_cast<S>((row[static_cast<std::size_t>(i)] - mean) * inv);
    }
    return degenerate;
  }

  // Pool rows resampled to n frames by nearest neighbor; identity when the
  // clip length matches the pool.
  Tensor<S> rows_for(Index n) const {
    if (n == frames()) return q;
    if (n <= 0) throw std::invalid_argument("rows_for: frame count must be positive");
    Tensor<S> out(Shape{classes(), n});
    auto om = out.mat();
    auto qm = q.mat();
    for (Index i = 0; i < n; ++i) {
      Index src = (2 * i + 1) * frames() / (2 * n);
      if (src >= frames()) src = frames() - 1;
      om.col(i) = qm.col(src);
    }
    return out;
  }
};

// xe = x + x (*) conv1x1(diag(mask) q, proj_w, proj_b), where (*) is the
// elementwise product. The mask selects contributing class rows: the
// ground-truth label indicator during training, first-branch clip scores at
// inference. Gradients flow into x and the projection; q and mask enter as
// constants.
template <typename S>
Var<S> enhance(Tape<S>& t, Var<S> x, const Tensor<S>& q, const Tensor<S>& mask,
               Var<S> proj_w, Var<S> proj_b) {
  const auto& xv = x.value();
  if (xv.rank() != 2) throw std::invalid_argument("enhance expects features [c x n]");
  if (q.rank() != 2 || mask.rank() != 1 || mask.dim(0) != q.dim(0))
    throw std::invalid_argument("enhance: mask length " + shape_str(mask.shape()) +
                                " does not match pool rows " + shape_str(q.shape()));
  const auto& wv = proj_w.value();
  if (wv.dim(0) != xv.dim(0) || wv.dim(1) != q.dim(0))
    throw std::invalid_argument("enhance: projection " + shape_str(wv.shape()) +
                                " incompatible with features " + shape_str(xv.shape()) +
                                " and pool " + shape_str(q.shape()));
  const Index n = xv.dim(1);
  Tensor<S> masked(Shape{q.dim(0), n});
  {
    // Nearest-neighbor frame resampling inlined for the off-length case.
    auto mm = masked.mat();
    auto qm = q.mat();
    for (Index j = 0; j < q.dim(0); ++j) {
      for (Index i = 0; i < n; ++i) {
        Index src = (q.dim(1) == n) ? i : (2 * i + 1) * q.dim(1) / (2 * n);
        if (src >= q.dim(1)) src = q.dim(1) - 1;
        mm(j, i) = mask[j] * qm(j, src);
      }
    }
  }
  Var<S> ctx = conv1x1(t.constant(std::move(masked)), proj_w, proj_b);
  return add(x, mul(x, ctx));
}

// Intervention oracle: k separate passes, pass i enhancing with only context
// row i, classifying each, then averaging with the uniform 1/k prior. Never
// used in training; it exists to validate the single-pass path.
template <typename S>
Tensor<S> exact_backdoor(const Tensor<S>& x, const ContextPool<S>& pool, Model<S>& model) {
  const Index k = pool.classes();
  Tensor<double> acc(Shape{k});
  for (Index i = 0; i < k; ++i) {
    Tape<S> t;
    Tensor<S> mask(Shape{k});
    mask[i] = S(1);
    Var<S> xe = enhance(t, t.constant(x), pool.q, mask, t.param(model.proj.w),
                        t.param(model.proj.b));
    Var<S> m = frame_scores(t, xe, t.param(model.classifier.w), t.param(model.classifier.b));
    Var<S> s = aggregate_clip(m);
    for (Index c = 0; c < k; ++c) acc[c] += static_cast<double>(s.value()[c]);
  }
  Tensor<S> out(Shape{k});
  for (Index c = 0; c < k; ++c)
    out[c] = static_cast<S>(acc[c] / static_cast<double>(k));
  return out;
}

// Deployed single-pass path: enhance once with the mask scaled by the
// uniform prior 1/k, then classify the enhanced features.
template <typename S>
Tensor<S> approx_backdoor(const Tensor<S>& x, const ContextPool<S>& pool,
                          const Tensor<S>& mask, Model<S>& model) {
  const Index k = pool.classes();
  if (mask.rank() != 1 || mask.dim(0) != k)
    throw std::invalid_argument("approx_backdoor: mask must have one entry per class");
  Tape<S> t;
  Tensor<S> scaled(Shape{k});
  for (Index i = 0; i < k; ++i) scaled[i] = static_cast<S>(mask[i] / static_cast<S>(k));
  Var<S> xe = enhance(t, t.constant(x), pool.q, scaled, t.param(model.proj.w),
                      t.param(model.proj.b));
  Var<S> m = frame_scores(t, xe, t.param(model.classifier.w), t.param(model.classifier.b));
  return aggregate_clip(m).value();
}

}  // namespace sedlab

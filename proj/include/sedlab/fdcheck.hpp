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

#include <algorithm>
#include <cmath>

#include "sedlab/tensor.hpp"

namespace sedlab {

// Central-difference gradient of a scalar functional with respect to x.
// `loss` must recompute the loss from the current contents of x; x is
// perturbed one entry at a time and restored before returning.
template <typename S, typename Loss>
Tensor<S> finite_diff_grad(Tensor<S>& x, Loss&& loss, double h) {
  Tensor<S> g(x.shape());
  for (Index i = 0; i < x.numel(); ++i) {
    const S orig = x[i];
    x[i] = static_cast<S>(static_cast<double>(orig) + h);
    const double fp = loss();
    x[i] = static_cast<S>(static_cast<double>(orig) - h);
    const double fm = loss();
    x[i] = orig;
    g[i] = static_cast<S>((fp - fm) / (2.0 * h));
  }
  return g;
}

struct GradErrorStats {
  double max_abs = 0.0;  // max_i |analytic_i - fd_i|
  double l2_rel = 0.0;   // ||a - f||_2 / max(||a||_2 + ||f||_2, 1e-12)
};

template <typename S>
GradErrorStats compare_grads(const Tensor<S>& analytic, const Tensor<S>& fd) {
  GradErrorStats st;
  double diff2 = 0.0, a2 = 0.0, f2 = 0.0;
  for (Index i = 0; i < analytic.numel(); ++i) {
    const double a = static_cast<double>(analytic[i]);
    const double f = static_cast<double>(fd[i]);
    st.max_abs = std::max(st.max_abs, std::abs(a - f));
    diff2 += (a - f) * (a - f);
    a2 += a * a;
    f2 += f * f;
  }
  st.l2_rel = std::sqrt(diff2) / std::max(std::sqrt(a2) + std::sqrt(f2), 1e-12);
  return st;
}

// Relative criterion, with an absolute escape for identically-zero gradients
// where central differences only return cancellation noise.
template <typename S>
bool grads_match(const Tensor<S>& analytic, const Tensor<S>& fd, double tol = 1e-6) {
  const GradErrorStats st = compare_grads(analytic, fd);
  return st.l2_rel < tol || st.max_abs < tol;
}

}  // namespace sedlab

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
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sedlab/tensor.hpp"

namespace sedlab {

// A named, trainable tensor living outside any tape. Gradients accumulate
// into `grad` across backward passes until zero_grad().
template <typename Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Param() = default;
  Param(std::string n, Tensor<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.data().setZero(); }
};

template <typename Scalar>
class Tape;

// Handle to a node on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  Index id = -1;

  const Tensor<Scalar>& value() const;
  const Tensor<Scalar>& grad() const;
};

// Reverse-mode tape. Operations append nodes in topological order; backward
// walks them once in exact reverse order. One tape per training step (or per
// clip); build a fresh tape instead of resetting.
template <typename Scalar>
class Tape {
 public:
  using Vr = Var<Scalar>;

  Vr leaf(Tensor<Scalar> value) {
    const bool rg = value.requires_grad();
    return push(std::move(value), rg, {}, nullptr);
  }

  Vr constant(Tensor<Scalar> value) {
    value.set_requires_grad(false);
    return push(std::move(value), false, {}, nullptr);
  }

  // Leaf bound to an external parameter; after backward() the node gradient
  // is added into param.grad.
  Vr param(Param<Scalar>& p) {
    Vr v = push(p.value, true, {}, nullptr);
    bindings_.emplace_back(v.id, &p);
    return v;
  }

  const Tensor<Scalar>& value(Index id) const { return nodes_[id].value; }

  const Tensor<Scalar>& grad(Index id) const {
    if (!backward_done_)
      throw std::logic_error("gradients are only available after backward()");
    return nodes_[id].grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and propagates. Rejects non-scalar losses
  // and a second call on the same tape.
  void backward(Vr loss, Scalar seed = Scalar(1)) {
    if (loss.tape != this) throw std::invalid_argument("loss node belongs to a different tape");
    if (backward_done_)
      throw std::logic_error("backward() called twice on one tape without reset");
    const Node& ln = nodes_[loss.id];
    if (ln.value.numel() != 1)
      throw std::invalid_argument("backward() requires a scalar loss, got " +
                                  shape_str(ln.value.shape()));
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Tensor<Scalar>(n.value.shape());
    }
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;  // loss disconnected from parameters
    nodes_[loss.id].grad.data()[0] = seed;
    for (Index i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward_fn) n.backward_fn(*this, i);
    }
    for (auto& [id, p] : bindings_) p->grad.data() += nodes_[id].grad.data();
  }

  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool requires_grad = false;
    std::function<void(Tape&, Index)> backward_fn;
    std::vector<Index> parents;
  };

  Vr push(Tensor<Scalar> value, bool requires_grad, std::vector<Index> parents,
          std::function<void(Tape&, Index)> backward_fn) {
    if (backward_done_)
      throw std::logic_error("tape already consumed by backward(); build a new tape");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.parents = std::move(parents);
    n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Vr{this, static_cast<Index>(nodes_.size()) - 1};
  }

  Tensor<Scalar>& grad_buf(Index id) { return nodes_[id].grad; }
  bool node_requires_grad(Index id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<std::pair<Index, Param<Scalar>*>> bindings_;
  bool backward_done_ = false;

  template <typename S>
  friend Var<S> op_node(Tape<S>&, Tensor<S>, std::vector<Index>,
                        std::function<void(Tape<S>&, Index)>);
  template <typename S>
  friend Tensor<S>& op_grad(Tape<S>&, Index);
  template <typename S>
  friend bool op_needs_grad(const Tape<S>&, Index);
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return tape->value(id);
}

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::grad() const {
  return tape->grad(id);
}

// --- op plumbing ---------------------------------------------------------

template <typename S>
Var<S> op_node(Tape<S>& t, Tensor<S> value, std::vector<Index> parents,
               std::function<void(Tape<S>&, Index)> backward_fn) {
  bool rg = false;
  for (Index p : parents) rg = rg || t.node_requires_grad(p);
  return t.push(std::move(value), rg, std::move(parents), rg ? std::move(backward_fn) : nullptr);
}

template <typename S>
Tensor<S>& op_grad(Tape<S>& t, Index id) {
  return t.grad_buf(id);
}

template <typename S>
bool op_needs_grad(const Tape<S>& t, Index id) {
  return t.node_requires_grad(id);
}

namespace detail {

template <typename A, typename B>
void check_same_tape(const A& a, const B& b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands live on different tapes");
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace detail

// --- operators ------------------------------------------------------------

// Standard matrix product, a [p x q] * b [q x r] -> [p x r].
template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  const auto& av = t.value(a.id);
  const auto& bv = t.value(b.id);
  detail::require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
                  "matmul shape mismatch: " + shape_str(av.shape()) + " x " +
                      shape_str(bv.shape()));
  Tensor<S> out(Shape{av.dim(0), bv.dim(1)});
  out.mat().noalias() = av.mat() * bv.mat();
  const Index aid = a.id, bid = b.id;
  return op_node<S>(t, std::move(out), {aid, bid}, [aid, bid](Tape<S>& tp, Index self) {
    auto gm = op_grad(tp, self).mat();
    if (op_needs_grad(tp, aid))
      op_grad(tp, aid).mat().noalias() += gm * tp.value(bid).mat().transpose();
    if (op_needs_grad(tp, bid))
      op_grad(tp, bid).mat().noalias() += tp.value(aid).mat().transpose() * gm;
  });
}

// Per-frame linear map across channels: out[:,t] = w * x[:,t] + bias.
// x [k x n], w [c x k], bias [c] -> [c x n].
template <typename S>
Var<S> conv1x1(Var<S> x, Var<S> w, Var<S> bias) {
  detail::check_same_tape(x, w);
  detail::check_same_tape(x, bias);
  Tape<S>& t = *x.tape;
  const auto& xv = t.value(x.id);
  const auto& wv = t.value(w.id);
  const auto& bv = t.value(bias.id);
  detail::require(xv.rank() == 2 && wv.rank() == 2 && bv.rank() == 1,
                  "conv1x1 expects x rank-2, w rank-2, bias rank-1");
  detail::require(wv.dim(1) == xv.dim(0),
                  "conv1x1 channel mismatch: w " + shape_str(wv.shape()) +
                      " vs x " + shape_str(xv.shape()));
  detail::require(bv.dim(0) == wv.dim(0),
                  "conv1x1 bias length " + shape_str(bv.shape()) +
                      " does not match output channels of w " + shape_str(wv.shape()));
  Tensor<S> out(Shape{wv.dim(0), xv.dim(1)});
  out.mat().noalias() = wv.mat() * xv.mat();
  out.mat().colwise() += bv.vec();
  const Index xid = x.id, wid = w.id, bid = bias.id;
  return op_node<S>(t, std::move(out), {xid, wid, bid},
                    [xid, wid, bid](Tape<S>& tp, Index self) {
                      auto gm = op_grad(tp, self).mat();
                      if (op_needs_grad(tp, wid))
                        op_grad(tp, wid).mat().noalias() +=
                            gm * tp.value(xid).mat().transpose();
                      if (op_needs_grad(tp, xid))
                        op_grad(tp, xid).mat().noalias() +=
                            tp.value(wid).mat().transpose() * gm;
                      if (op_needs_grad(tp, bid))
                        op_grad(tp, bid).vec().noalias() += gm.rowwise().sum();
                    });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  const auto& av = t.value(a.id);
  const auto& bv = t.value(b.id);
  detail::require(av.same_shape(bv), "add shape mismatch: " + shape_str(av.shape()) +
                                         " vs " + shape_str(bv.shape()));
  Tensor<S> out(av.shape());
  out.data() = av.data() + bv.data();
  const Index aid = a.id, bid = b.id;
  return op_node<S>(t, std::move(out), {aid, bid}, [aid, bid](Tape<S>& tp, Index self) {
    const auto& g = op_grad(tp, self).data();
    if (op_needs_grad(tp, aid)) op_grad(tp, aid).data() += g;
    if (op_needs_grad(tp, bid)) op_grad(tp, bid).data() += g;
  });
}

// Elementwise (Hadamard) product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::check_same_tape(a, b);
  Tape<S>& t = *a.tape;
  const auto& av = t.value(a.id);
  const auto& bv = t.value(b.id);
  detail::require(av.same_shape(bv), "mul shape mismatch: " + shape_str(av.shape()) +
                                         " vs " + shape_str(bv.shape()));
  Tensor<S> out(av.shape());
  out.data() = av.data() * bv.data();
  const Index aid = a.id, bid = b.id;
  return op_node<S>(t, std::move(out), {aid, bid}, [aid, bid](Tape<S>& tp, Index self) {
    const auto& g = op_grad(tp, self).data();
    if (op_needs_grad(tp, aid)) op_grad(tp, aid).data() += g * tp.value(bid).data();
    if (op_needs_grad(tp, bid)) op_grad(tp, bid).data() += g * tp.value(aid).data();
  });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
  Tape<S>& t = *a.tape;
  Tensor<S> out(t.value(a.id).shape());
  out.data() = t.value(a.id).data() * factor;
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid}, [aid, factor](Tape<S>& tp, Index self) {
    if (op_needs_grad(tp, aid))
      op_grad(tp, aid).data() += op_grad(tp, self).data() * factor;
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  Tensor<S> out(t.value(a.id).shape());
  out.data() = t.value(a.id).data().max(S(0));
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid}, [aid](Tape<S>& tp, Index self) {
    if (!op_needs_grad(tp, aid)) return;
    const auto& x = tp.value(aid).data();
    op_grad(tp, aid).data() +=
        op_grad(tp, self).data() * (x > S(0)).template cast<S>();
  });
}

// Numerically stable logistic; output floored at the smallest normal value so
// that deep saturation stays strictly positive.
template <typename S>
S sigmoid_scalar(S x) {
  S y;
  if (x >= S(0)) {
    y = S(1) / (S(1) + std::exp(-x));
  } else {
    const S e = std::exp(x);
    y = e / (S(1) + e);
  }
  return std::max(y, std::numeric_limits<S>::min());
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  Tensor<S> out(xv.shape());
  for (Index i = 0; i < xv.numel(); ++i) out[i] = sigmoid_scalar(xv[i]);
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid}, [aid](Tape<S>& tp, Index self) {
    if (!op_needs_grad(tp, aid)) return;
    const auto& y = tp.value(self).data();
    op_grad(tp, aid).data() += op_grad(tp, self).data() * y * (S(1) - y);
  });
}

// Sum of all elements -> scalar node. Accumulates in double.
template <typename S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  double acc = 0.0;
  for (Index i = 0; i < xv.numel(); ++i) acc += static_cast<double>(xv[i]);
  const Index aid = a.id;
  return op_node<S>(t, Tensor<S>::scalar(static_cast<S>(acc)), {aid},
                    [aid](Tape<S>& tp, Index self) {
                      if (!op_needs_grad(tp, aid)) return;
                      op_grad(tp, aid).data() += op_grad(tp, self).data()[0];
                    });
}

// Row means: x [r x n] -> [r]. The clip-level aggregator.
template <typename S>
Var<S> mean_rows(Var<S> a) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  detail::require(xv.rank() == 2, "mean_rows expects a rank-2 tensor, got " +
                                      shape_str(xv.shape()));
  detail::require(xv.dim(1) >= 1, "mean_rows: empty frame axis");
  const Index r = xv.dim(0), n = xv.dim(1);
  Tensor<S> out(Shape{r});
  auto xm = xv.mat();
  for (Index i = 0; i < r; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) acc += static_cast<double>(xm(i, j));
    out[i] = static_cast<S>(acc / static_cast<double>(n));
  }
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid}, [aid, n](Tape<S>& tp, Index self) {
    if (!op_needs_grad(tp, aid)) return;
    const auto& g = op_grad(tp, self);
    auto gx = op_grad(tp, aid).mat();
    const S inv = S(1) / static_cast<S>(n);
    for (Index i = 0; i < g.numel(); ++i) gx.row(i).array() += g[i] * inv;
  });
}

// Mean over the H axis: x [C x H x W] -> [C x W].
template <typename S>
Var<S> mean_over_h(Var<S> a) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  detail::require(xv.rank() == 3, "mean_over_h expects a rank-3 tensor, got " +
                                      shape_str(xv.shape()));
  const Index C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  Tensor<S> out(Shape{C, W});
  auto om = out.mat();
  for (Index c = 0; c < C; ++c) {
    auto ch = xv.channel(c);
    for (Index w = 0; w < W; ++w) {
      double acc = 0.0;
      for (Index h = 0; h < H; ++h) acc += static_cast<double>(ch(h, w));
      om(c, w) = static_cast<S>(acc / static_cast<double>(H));
    }
  }
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid}, [aid, C, H, W](Tape<S>& tp, Index self) {
    if (!op_needs_grad(tp, aid)) return;
    auto gm = op_grad(tp, self).mat();
    auto& gx = op_grad(tp, aid);
    const S inv = S(1) / static_cast<S>(H);
    for (Index c = 0; c < C; ++c) {
      auto gch = gx.channel(c);
      for (Index h = 0; h < H; ++h) gch.row(h) += gm.row(c) * inv;
    }
  });
}

// Average pooling along H by an integer factor: [C x H x W] -> [C x H/f x W].
template <typename S>
Var<S> avg_pool_h(Var<S> a, Index factor) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  detail::require(xv.rank() == 3, "avg_pool_h expects a rank-3 tensor");
  const Index C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
  detail::require(factor >= 1 && H % factor == 0,
                  "avg_pool_h: H=" + std::to_string(H) +
                      " not divisible by factor " + std::to_string(factor));
  const Index OH = H / factor;
  Tensor<S> out(Shape{C, OH, W});
  for (Index c = 0; c < C; ++c) {
    auto xc = xv.channel(c);
    auto oc = out.channel(c);
    for (Index oh = 0; oh < OH; ++oh) {
      oc.row(oh) = xc.row(oh * factor);
      for (Index j = 1; j < factor; ++j) oc.row(oh) += xc.row(oh * factor + j);
      oc.row(oh) /= static_cast<S>(factor);
    }
  }
  const Index aid = a.id;
  return op_node<S>(t, std::move(out), {aid},
                    [aid, C, OH, factor](Tape<S>& tp, Index self) {
                      if (!op_needs_grad(tp, aid)) return;
                      auto& g = op_grad(tp, self);
                      auto& gx = op_grad(tp, aid);
                      const S inv = S(1) / static_cast<S>(factor);
                      for (Index c = 0; c < C; ++c) {
                        auto gc = g.channel(c);
                        auto gxc = gx.channel(c);
                        for (Index oh = 0; oh < OH; ++oh)
                          for (Index j = 0; j < factor; ++j)
                            gxc.row(oh * factor + j) += gc.row(oh) * inv;
                      }
                    });
}

// Row standardization (x - mean) / sqrt(var + eps), population variance over
// everything but the first axis. Statistics accumulate in double.
template <typename S>
Var<S> standardize_rows(Var<S> a, double eps) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  detail::require(xv.rank() >= 1, "standardize_rows expects rank >= 1");
  const Index r = xv.dim(0), n = xv.numel() / xv.dim(0);
  Tensor<S> out(xv.shape());
  std::vector<S> inv_sigma(static_cast<std::size_t>(r));
  auto xm = xv.rows_view();
  auto om = out.rows_view();
  for (Index i = 0; i < r; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (Index j = 0; j < n; ++j) {
      const double v = static_cast<double>(xm(i, j));
      s1 += v;
      s2 += v * v;
    }
    const double mean = s1 / static_cast<double>(n);
    const double var = std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<std::size_t>(i)] = static_cast<S>(inv);
    for (Index j = 0; j < n; ++j)
      om(i, j) = static_cast<S>((static_cast<double>(xm(i, j)) - mean) * inv);
  }
  const Index aid = a.id;
  return op_node<S>(
      t, std::move(out), {aid},
      [aid, r, n, inv_sigma = std::move(inv_sigma)](Tape<S>& tp, Index self) {
        if (!op_needs_grad(tp, aid)) return;
        // dx = (g - mean(g) - y * mean(g .* y)) / sigma, per row.
        auto ym = tp.value(self).rows_view();
        auto gm = op_grad(tp, self).rows_view();
        auto gx = op_grad(tp, aid).rows_view();
        for (Index i = 0; i < r; ++i) {
          double gs = 0.0, gys = 0.0;
          for (Index j = 0; j < n; ++j) {
            const double g = static_cast<double>(gm(i, j));
            gs += g;
            gys += g * static_cast<double>(ym(i, j));
          }
          const double gmean = gs / static_cast<double>(n);
          const double gymean = gys / static_cast<double>(n);
          const double inv = static_cast<double>(inv_sigma[static_cast<std::size_t>(i)]);
          for (Index j = 0; j < n; ++j) {
            const double g = static_cast<double>(gm(i, j));
            const double y = static_cast<double>(ym(i, j));
            gx(i, j) += static_cast<S>((g - gmean - y * gymean) * inv);
          }
        }
      });
}

// Column standardization (x - mean) / sqrt(var + eps) over the H axis,
// independently per channel and per column: [C x H x W] normalizes each
// (c, w) fiber, [H x W] each column. Statistics never cross the last
// axis, so when columns are time frames the output at one frame depends
// on that frame alone. Accumulates in double.
template <typename S>
Var<S> standardize_h(Var<S> a, double eps) {
  Tape<S>& t = *a.tape;
  const auto& xv = t.value(a.id);
  detail::require(xv.rank() == 2 || xv.rank() == 3,
                  "standardize_h expects a rank-2 or rank-3 tensor, got " +
                      shape_str(xv.shape()));
  const Index C = xv.rank() == 3 ? xv.dim(0) : 1;
  const Index H = xv.rank() == 3 ? xv.dim(1) : xv.dim(0);
  const Index W = xv.rank() == 3 ? xv.dim(2) : xv.dim(1);
  Tensor<S> out(xv.shape());
  std::vector<S> inv_sigma(static_cast<std::size_t>(C * W));
  for (Index c = 0; c < C; ++c) {
    auto xm = xv.rank() == 3 ? xv.channel(c) : xv.mat();
    auto om = out.rank() == 3 ? out.channel(c) : out.mat();
    for (Index w = 0; w < W; ++w) {
      double s1 = 0.0, s2 = 0.0;
      for (Index h = 0; h < H; ++h) {
        const double v = static_cast<double>(xm(h, w));
        s1 += v;
        s2 += v * v;
      }
      const double mean = s1 / static_cast<double>(H);
      const double var = std::max(0.0, s2 / static_cast<double>(H) - mean * mean);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_sigma[static_cast<std::size_t>(c * W + w)] = static_cast<S>(inv);
      for (Index h = 0; h < H; ++h)
        om(h, w) = static_cast<S>((static_cast<double>(xm(h, w)) - mean) * inv);
    }
  }
  const Index aid = a.id;
  return op_node<S>(
      t, std::move(out), {aid},
      [aid, C, H, W, inv_sigma = std::move(inv_sigma)](Tape<S>& tp, Index self) {
        if (!op_needs_grad(tp, aid)) return;
        // dx = (g - mean(g) - y * mean(g .* y)) / sigma, per column.
        const auto& yv = tp.value(self);
        const auto& gv = op_grad(tp, self);
        auto& gx = op_grad(tp, aid);
        for (Index c = 0; c < C; ++c) {
          auto ym = yv.rank() == 3 ? yv.channel(c) : yv.mat();
          auto gm = gv.rank() == 3 ? gv.channel(c) : gv.mat();
          auto gxm = gx.rank() == 3 ? gx.channel(c) : gx.mat();
          for (Index w = 0; w < W; ++w) {
            double gs = 0.0, gys = 0.0;
            for (Index h = 0; h < H; ++h) {
              const double g = static_cast<double>(gm(h, w));
              gs += g;
              gys += g * static_cast<double>(ym(h, w));
            }
            const double gmean = gs / static_cast<double>(H);
            const double gymean = gys / static_cast<double>(H);
            const double inv =
                static_cast<double>(inv_sigma[static_cast<std::size_t>(c * W + w)]);
            for (Index h = 0; h < H; ++h) {
              const double g = static_cast<double>(gm(h, w));
              const double y = static_cast<double>(ym(h, w));
              gxm(h, w) += static_cast<S>((g - gmean - y * gymean) * inv);
            }
          }
        }
      });
}

namespace detail {

// col layout: row ((cin*KH)+ki)*KW+kj, column oh*OW+ow.
template <typename S>
void im2col(const Tensor<S>& x, Index KH, Index KW, Index stride, Index pad,
            Index OH, Index OW,
            Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& col) {
  const Index Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  col.setZero(Cin * KH * KW, OH * OW);
  for (Index cin = 0; cin < Cin; ++cin) {
    auto xc = x.channel(cin);
    for (Index ki = 0; ki < KH; ++ki) {
      for (Index kj = 0; kj < KW; ++kj) {
        const Index row = (cin * KH + ki) * KW + kj;
        for (Index oh = 0; oh < OH; ++oh) {
          const Index ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (Index ow = 0; ow < OW; ++ow) {
            const Index iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= W) continue;
            col(row, oh * OW + ow) = xc(ih, iw);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_accumulate(const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& col,
                       Index KH, Index KW, Index stride, Index pad, Index OH,
                       Index OW, Tensor<S>& gx) {
  const Index Cin = gx.dim(0), H = gx.dim(1), W = gx.dim(2);
  for (Index cin = 0; cin < Cin; ++cin) {
    auto gc = gx.channel(cin);
    for (Index ki = 0; ki < KH; ++ki) {
      for (Index kj = 0; kj < KW; ++kj) {
        const Index row = (cin * KH + ki) * KW + kj;
        for (Index oh = 0; oh < OH; ++oh) {
          const Index ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (Index ow = 0; ow < OW; ++ow) {
            const Index iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= W) continue;
            gc(ih, iw) += col(row, oh * OW + ow);
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D convolution, x [Cin x H x W], w [Cout x Cin x KH x KW], bias [Cout].
// Zero padding `pad` on both spatial axes, stride `stride`.
template <typename S>
Var<S> conv2d(Var<S> x, Var<S> w, Var<S> bias, Index stride = 1, Index pad = 1) {
  detail::check_same_tape(x, w);
  detail::check_same_tape(x, bias);
  Tape<S>& t = *x.tape;
  const auto& xv = t.value(x.id);
  const auto& wv = t.value(w.id);
  const auto& bv = t.value(bias.id);
  detail::require(xv.rank() == 3 && wv.rank() == 4 && bv.rank() == 1,
                  "conv2d expects x rank-3, w rank-4, bias rank-1");
  detail::require(wv.dim(1) == xv.dim(0),
                  "conv2d channel mismatch: w " + shape_str(wv.shape()) +
                      " vs x " + shape_str(xv.shape()));
  detail::require(bv.dim(0) == wv.dim(0), "conv2d bias length mismatch");
  detail::require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const Index Cout = wv.dim(0), Cin = wv.dim(1), KH = wv.dim(2), KW = wv.dim(3);
  const Index H = xv.dim(1), W = xv.dim(2);
  const Index OH = (H + 2 * pad - KH) / stride + 1;
  const Index OW = (W + 2 * pad - KW) / stride + 1;
  detail::require(OH >= 1 && OW >= 1, "conv2d: kernel larger than padded input");

  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> col;
  detail::im2col(xv, KH, KW, stride, pad, OH, OW, col);
  Tensor<S> out(Shape{Cout, OH, OW});
  using CMatMap = typename Tensor<S>::ConstMatMap;
  using MatMap = typename Tensor<S>::MatMap;
  CMatMap wmat(wv.data().data(), Cout, Cin * KH * KW);
  MatMap omat(out.data().data(), Cout, OH * OW);
  omat.noalias() = wmat * col;
  omat.colwise() += bv.vec();

  const Index xid = x.id, wid = w.id, bid = bias.id;
  return op_node<S>(
      t, std::move(out), {xid, wid, bid},
      [xid, wid, bid, stride, pad, Cout, Cin, KH, KW, OH, OW](Tape<S>& tp, Index self) {
        const auto& gv = op_grad(tp, self);
        CMatMap gmat(gv.data().data(), Cout, OH * OW);
        if (op_needs_grad(tp, bid))
          op_grad(tp, bid).vec().noalias() += gmat.rowwise().sum();
        const bool need_w = op_needs_grad(tp, wid);
        const bool need_x = op_needs_grad(tp, xid);
        if (need_w) {
          // im2col is recomputed here rather than cached on the node.
          Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> col2;
          detail::im2col(tp.value(xid), KH, KW, stride, pad, OH, OW, col2);
          MatMap gwmat(op_grad(tp, wid).data().data(), Cout, Cin * KH * KW);
          gwmat.noalias() += gmat * col2.transpose();
        }
        if (need_x) {
          CMatMap wmat2(tp.value(wid).data().data(), Cout, Cin * KH * KW);
          Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> gcol =
              wmat2.transpose() * gmat;
          detail::col2im_accumulate(gcol, KH, KW, stride, pad, OH, OW,
                                    op_grad(tp, xid));
        }
      });
}

// Mean binary cross-entropy against a constant target in {0,1}. Predictions
// are clamped to [eps, 1-eps] before the logs; the loss is averaged over all
// elements and accumulated in double.
template <typename S>
Var<S> bce_loss(Var<S> pred, const Tensor<S>& target, double eps = 1e-7) {
  Tape<S>& t = *pred.tape;
  const auto& pv = t.value(pred.id);
  detail::require(pv.same_shape(target),
                  "bce_loss shape mismatch: pred " + shape_str(pv.shape()) +
                      " vs target " + shape_str(target.shape()));
  const Index n = pv.numel();
  const double lo = eps, hi = 1.0 - eps;
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double p = std::min(hi, std::max(lo, static_cast<double>(pv[i])));
    const double tv = static_cast<double>(target[i]);
    acc -= tv * std::log(p) + (1.0 - tv) * std::log(1.0 - p);
  }
  acc /= static_cast<double>(n);
  const Index pid = pred.id;
  Tensor<S> tgt = target;
  return op_node<S>(
      t, Tensor<S>::scalar(static_cast<S>(acc)), {pid},
      [pid, tgt = std::move(tgt), lo, hi, n](Tape<S>& tp, Index self) {
        if (!op_needs_grad(tp, pid)) return;
        const double g0 = static_cast<double>(op_grad(tp, self).data()[0]);
        const auto& pv2 = tp.value(pid);
        auto& gp = op_grad(tp, pid);
        for (Index i = 0; i < n; ++i) {
          const double p = static_cast<double>(pv2[i]);
          if (p <= lo || p >= hi) continue;  // clamp region: zero gradient
          const double tv = static_cast<double>(tgt[i]);
          gp.data()[i] += static_cast<S>(g0 * (p - tv) / (p * (1.0 - p)) /
                                         static_cast<double>(n));
        }
      });
}

}  // namespace sedlab

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

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sedlab {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major tensor of rank 0..3. All continuous quantities in the
// library (features, predictions, pool state, parameters) live in one of
// these, templated on the storage scalar.
template <typename Scalar>
class Tensor {
 public:
  using Flat = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixRM =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatMap = Eigen::Map<MatrixRM>;
  using ConstMatMap = Eigen::Map<const MatrixRM>;
  using VecMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;
  using ConstVecMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : shape_(std::move(shape)), requires_grad_(requires_grad) {
    for (Index d : shape_) {
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape_));
    }
    data_ = Flat::Zero(shape_numel(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(Scalar value) {
    Tensor t(Shape{1});
    t.data_[0] = value;
    return t;
  }

  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Tensor t(std::move(shape));
    if (static_cast<Index>(values.size()) != t.numel())
      throw std::invalid_argument("initializer size does not match shape " + shape_str(t.shape_));
    Index i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  template <typename Other>
  static Tensor from_cast(const Tensor<Other>& other) {
    Tensor t(other.shape());
    t.data() = other.data().template cast<Scalar>();
    t.set_requires_grad(other.requires_grad());
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index numel() const { return data_.size(); }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool v) { requires_grad_ = v; }

  Flat& data() { return data_; }
  const Flat& data() const { return data_; }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // Rank-2 view.
  MatMap mat() {
    check_rank(2);
    return MatMap(data_.data(), shape_[0], shape_[1]);
  }
  ConstMatMap mat() const {
    check_rank(2);
    return ConstMatMap(data_.data(), shape_[0], shape_[1]);
  }

  // Rank-1 view.
  VecMap vec() {
    check_rank(1);
    return VecMap(data_.data(), shape_[0]);
  }
  ConstVecMap vec() const {
    check_rank(1);
    return ConstVecMap(data_.data(), shape_[0]);
  }

  // Rank-3 per-channel view: tensor [C x H x W], channel c as an H x W map.
  MatMap channel(Index c) {
    check_rank(3);
    return MatMap(data_.data() + c * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }
  ConstMatMap channel(Index c) const {
    check_rank(3);
    return ConstMatMap(data_.data() + c * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }

  // Any tensor viewed as [shape[0] x rest] rows; used by row reductions.
  MatMap rows_view() {
    if (rank() < 1) throw std::invalid_argument("rows_view requires rank >= 1");
    return MatMap(data_.data(), shape_[0], numel() / shape_[0]);
  }
  ConstMatMap rows_view() const {
    if (rank() < 1) throw std::invalid_argument("rows_view requires rank >= 1");
    return ConstMatMap(data_.data(), shape_[0], numel() / shape_[0]);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (Index i = 0; i < data_.size(); ++i)
      if (!std::isfinite(static_cast<double>(data_[i]))) return false;
    return true;
  }

 private:
  void check_rank(int r) const {
    if (rank() != r)
      throw std::invalid_argument("expected rank-" + std::to_string(r) +
                                  " tensor, got " + shape_str(shape_));
  }

  Shape shape_;
  Flat data_;
  bool requires_grad_ = false;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace sedlab

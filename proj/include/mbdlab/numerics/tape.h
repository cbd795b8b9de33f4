// Copyright 2026 The mbdlab Authors.
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

#ifndef MBDLAB_NUMERICS_TAPE_H_
#define MBDLAB_NUMERICS_TAPE_H_

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "mbdlab/numerics/param_store.h"

namespace mbdlab::numerics {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  Shape shape() const;
  std::span<const double> value() const;
  // Value of a 1x1 node.
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dense row-major matrix used to feed batches onto a tape.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  Shape shape() const { return {rows, cols}; }
};

// Records a computation over dense matrices and replays it in reverse to
// accumulate exact gradients. One tape covers one batch: record the forward
// pass, call backward once, then drop the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var constant(Shape shape, std::vector<double> values);
  Var constant(const Matrix& m) { return constant(m.shape(), m.data); }
  Var scalar(double v) { return constant({1, 1}, {v}); }
  // A free differentiable leaf; read its gradient with grad() after backward.
  Var variable(Shape shape, std::vector<double> values);
  // A trainable parameter. backward() adds into store.at(index).grad.
  Var param(ParamStore& store, std::size_t index);
  // A parameter read as a constant (inference, or a frozen model).
  Var frozen_param(const ParamStore& store, std::size_t index);

  // Linear algebra. matmul: [b x n] * [n x m]; add_row broadcasts a [1 x m]
  // row over every row of x.
  Var matmul(Var x, Var w);
  Var add_row(Var x, Var row);

  // Elementwise, equal shapes.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var square(Var a);
  // max(a, floor); the gradient is blocked where the floor is active.
  Var clamp_min(Var a, double floor);
  Var column(Var a, std::size_t c);

  // Reductions to 1x1.
  Var sum(Var a);
  Var mean(Var a);

  // Forward value unchanged, zero derivative to every ancestor.
  Var stop_gradient(Var a);

  // Per-element binary cross-entropy of `labels` under sigmoid(logits).
  Var bce_with_logits(Var logits, Var labels);
  // Per-element [tau - I(target < q)] * (target - q). Gradient flows to q only.
  Var pinball(Var target, Var q, double tau);

  // Reverse sweep from `root`. The scalar overload seeds d(root)/d(root) = 1.
  void backward(Var root);
  void backward(Var root, std::span<const double> upstream);

  Shape shape(Var v) const { return node(v).shape; }
  std::span<const double> value(Var v) const { return node(v).value; }
  // Gradient reaching `v` in the last backward pass (zeros if none).
  std::vector<double> grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  Var push(Shape shape, std::vector<double> value, bool requires_grad,
           std::function<void(Tape&, const Node&)> backward);
  // Gradient buffer of node `id`, allocated on first touch.
  std::vector<double>& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void check_same_shape(Var a, Var b, const char* op) const;
  Var unary(Var a, const std::function<double(double)>& f,
            const std::function<double(double x, double y)>& dfdx);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator*(double c, Var a) { return a.tape()->scale(a, c); }
inline Var operator-(Var a) { return a.tape()->scale(a, -1.0); }

inline Var stop_gradient(Var a) { return a.tape()->stop_gradient(a); }

}  // namespace mbdlab::numerics

#endif  // MBDLAB_NUMERICS_TAPE_H_

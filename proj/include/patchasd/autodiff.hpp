// Copyright 2026 The patchasd Authors.
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

// Reverse-mode differentiation over Tensor values.
//
// A Tape records every primitive applied to its Vars in execution order, so
// the record is already topologically sorted; backward() walks it in reverse
// and each node pushes its output gradient into its inputs. Tapes are
// single-use and single-threaded. Independent computations (for example the
// clips of one batch) should use independent tapes.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "patchasd/tensor.hpp"

namespace patchasd {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  // Appends a node computed from `inputs`. `backward` receives the tape and
  // the new node's id; it reads out_grad(id) and accumulates into inputs.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and propagates. Root must hold one element.
  void backward(Var root);

  // Gradient of the last backward() root w.r.t. v; zeros when v did not
  // contribute.
  Tensor grad(Var v) const;

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Accessors for backward closures.
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of node `id`, allocated on first use, or nullptr when
  // the node does not require a gradient.
  Tensor* grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  // deque keeps references returned by Var::value() stable across pushes.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

// Primitive ops. All shapes are checked; violations raise ShapeError naming
// the op and the offending shapes. "Row vector" ops broadcast a rank-1
// operand of length cols() across every row of a rank-2 operand.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_row(Var a, Var row);      // a[n x d] + row[d]
Var mul_row(Var a, Var row);      // a[n x d] * row[d]
Var mul_col(Var a, Var col);      // a[n x d] * col[n]
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var reciprocal(Var a);
Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var gelu(Var a);                  // exact erf form
Var clamp(Var a, double lo, double hi);
// arccos of the input clamped to [-1 + 1e-7, 1 - 1e-7].
Var arccos_clamped(Var a);
Var softmax(Var a, int axis);     // rank 2, axis 0 or 1
Var logsumexp_rows(Var a);        // [n x c] -> [n]
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
Var sum(Var a);                   // -> scalar
Var mean(Var a);                  // -> scalar
Var sum_rows(Var a);              // [n x d] -> [d]
Var sum_cols(Var a);              // [n x d] -> [n]
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var reshape(Var a, Shape shape);
Var gather_rows(Var table, std::vector<std::size_t> indices);
Var pick(Var a, std::span<const std::size_t> cols);   // [n x c] -> [n]
Var scatter_onehot(Var values, std::span<const std::size_t> cols,
                   std::size_t width);               // [n] -> [n x width]
// Scaled dot-product self-attention over `heads` equal column blocks of
// q, k, v [n x d]: softmax(q_h k_h^T / sqrt(d/heads)) v_h, concatenated.
Var multi_head_attention(Var q, Var k, Var v, std::size_t heads);

inline constexpr double kArccosClamp = 1e-7;

}  // namespace ad

// A scalar-valued computation over parameter Vars placed on `tape`.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct ValueAndGrad {
  double value = 0.0;
  std::vector<Tensor> grads;
};

ValueAndGrad value_and_grad(const ScalarFn& f, std::span<const Tensor> params);

// Evaluates f without recording gradients. Throws if f is not a scalar.
double evaluate(const ScalarFn& f, std::span<const Tensor> params);

// Central-difference gradient estimate, one pair of evaluations per element.
// Throws Error when any evaluation is non-finite or h <= 0.
std::vector<Tensor> finite_diff_grad(const ScalarFn& f,
                                     std::span<const Tensor> params, double h);

// max over tensors of ||a - b|| / max(||a||, ||b||, floor).
double max_relative_error(std::span<const Tensor> a, std::span<const Tensor> b,
                          double floor = 1e-8);

}  // namespace patchasd

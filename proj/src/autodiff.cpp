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

#include "patchasd/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace patchasd {

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error("tape: input belongs to another tape");
    if (nodes_[in.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::backward(Var root) {
  if (consumed_) throw Error("tape: backward() called twice on a single-use tape");
  consumed_ = true;
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  Tensor* g = grad_buffer(root.id());
  if (g == nullptr) return;
  (*g)[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Tensor::zeros(n.value.shape());
}

// ---------------------------------------------------------------------------
// Primitives

namespace ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_mat(const Tensor& t) { return ConstMap(t.data().data(), t.rows(), t.cols()); }
MutMap as_mat(Tensor& t) { return MutMap(t.data().data(), t.rows(), t.cols()); }

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

// Elementwise unary op with derivative expressed through input x and output y.
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, dfdx](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& gy = t.out_grad(self);
    for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += gy[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank("matmul", A, 2);
  require_rank("matmul", B, 2);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_str(A.shape()) + " x " +
                     shape_str(B.shape()));
  }
  Tensor C({A.rows(), B.cols()});
  as_mat(C).noalias() = as_mat(A) * as_mat(B);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(C), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto gC = as_mat(t.out_grad(self));
    if (Tensor* ga = t.grad_buffer(ia)) {
      as_mat(*ga).noalias() += gC * as_mat(t.value(ib)).transpose();
    }
    if (Tensor* gb = t.grad_buffer(ib)) {
      as_mat(*gb).noalias() += as_mat(t.value(ia)).transpose() * gC;
    }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_rank("transpose", A, 2);
  Tensor T({A.cols(), A.rows()});
  as_mat(T) = as_mat(A).transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(T), {a}, [ia](Tape& t, std::size_t self) {
    if (Tensor* ga = t.grad_buffer(ia)) as_mat(*ga) += as_mat(t.out_grad(self)).transpose();
  });
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    for (std::size_t id : {ia, ib}) {
      if (Tensor* gi = t.grad_buffer(id)) {
        for (std::size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (Tensor* ga = t.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = t.grad_buffer(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (Tensor* ga = t.grad_buffer(ia)) {
      const Tensor& B = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
    }
    if (Tensor* gb = t.grad_buffer(ib)) {
      const Tensor& A = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
    }
  });
}

namespace {

void require_row_vec(const char* op, const Tensor& a, const Tensor& v) {
  require_rank(op, a, 2);
  if (v.rank() != 1 || v.dim(0) != a.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " with row vector " + shape_str(v.shape()));
  }
}

}  // namespace

Var add_row(Var a, Var row) {
  require_row_vec("add_row", a.value(), row.value());
  Tensor y = a.value();
  const Tensor& r = row.value();
  const std::size_t n = y.rows(), d = y.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += r[j];
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(std::move(y), {a, row}, [ia, ir, n, d](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (Tensor* ga = t.grad_buffer(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gr = t.grad_buffer(ir)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*gr)[j] += g[i * d + j];
    }
  });
}

Var mul_row(Var a, Var row) {
  require_row_vec("mul_row", a.value(), row.value());
  Tensor y = a.value();
  const Tensor& r = row.value();
  const std::size_t n = y.rows(), d = y.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] *= r[j];
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape().record(std::move(y), {a, row}, [ia, ir, n, d](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (Tensor* ga = t.grad_buffer(ia)) {
      const Tensor& r = t.value(ir);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*ga)[i * d + j] += g[i * d + j] * r[j];
    }
    if (Tensor* gr = t.grad_buffer(ir)) {
      const Tensor& A = t.value(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*gr)[j] += g[i * d + j] * A[i * d + j];
    }
  });
}

Var mul_col(Var a, Var col) {
  const Tensor& A = a.value();
  const Tensor& c = col.value();
  require_rank("mul_col", A, 2);
  if (c.rank() != 1 || c.dim(0) != A.rows()) {
    throw ShapeError("mul_col: shape mismatch " + shape_str(A.shape()) +
                     " with column vector " + shape_str(c.shape()));
  }
  Tensor y = A;
  const std::size_t n = y.rows(), d = y.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] *= c[i];
  const std::size_t ia = a.id(), ic = col.id();
  return a.tape().record(std::move(y), {a, col}, [ia, ic, n, d](Tape& t, std::size_t self) {
    const Tensor& g = t.out_grad(self);
    if (Tensor* ga = t.grad_buffer(ia)) {
      const Tensor& c = t.value(ic);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*ga)[i * d + j] += g[i * d + j] * c[i];
    }
    if (Tensor* gc = t.grad_buffer(ic)) {
      const Tensor& A = t.value(ia);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*gc)[i] += g[i * d + j] * A[i * d + j];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var reciprocal(Var a) {
  return unary(a, [](double x) { return 1.0 / x; },
               [](double, double y) { return -y * y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  // The derivative is kept from the forward pass.
  auto dydx = std::make_shared<std::vector<double>>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    y[i] = x[i] * cdf;
    (*dydx)[i] = cdf + x[i] * inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, dydx](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& gy = t.out_grad(self);
    for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * (*dydx)[i];
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo > hi");
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var arccos_clamped(Var a) {
  static constexpr double lo = -1.0 + kArccosClamp, hi = 1.0 - kArccosClamp;
  return unary(
      a, [](double x) { return std::acos(std::clamp(x, lo, hi)); },
      [](double x, double) {
        if (x < lo || x > hi) return 0.0;
        return -1.0 / std::sqrt(1.0 - x * x);
      });
}

Var softmax(Var a, int axis) {
  const Tensor& X = a.value();
  require_rank("softmax", X, 2);
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const std::size_t n = X.rows(), d = X.cols();
  // Walk "lanes" along the softmax axis: lane l, element k.
  const std::size_t lanes = axis == 1 ? n : d;
  const std::size_t len = axis == 1 ? d : n;
  const std::size_t lane_stride = axis == 1 ? d : 1;
  const std::size_t elem_stride = axis == 1 ? 1 : d;
  Tensor Y(X.shape());
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t base = l * lane_stride;
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) m = std::max(m, X[base + k * elem_stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(X[base + k * elem_stride] - m);
      Y[base + k * elem_stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < len; ++k) Y[base + k * elem_stride] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(Y), {a},
      [ia, lanes, len, lane_stride, elem_stride](Tape& t, std::size_t self) {
        Tensor* ga = t.grad_buffer(ia);
        if (!ga) return;
        const Tensor& Y = t.value(self);
        const Tensor& G = t.out_grad(self);
        for (std::size_t l = 0; l < lanes; ++l) {
          const std::size_t base = l * lane_stride;
          double dot = 0.0;
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = base + k * elem_stride;
            dot += G[i] * Y[i];
          }
          for (std::size_t k = 0; k < len; ++k) {
            const std::size_t i = base + k * elem_stride;
            (*ga)[i] += Y[i] * (G[i] - dot);
          }
        }
      });
}

Var logsumexp_rows(Var a) {
  const Tensor& X = a.value();
  require_rank("logsumexp_rows", X, 2);
  const std::size_t n = X.rows(), d = X.cols();
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) m = std::max(m, X[i * d + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(X[i * d + j] - m);
    y[i] = m + std::log(z);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n, d](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& X = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        (*ga)[i * d + j] += g[i] * std::exp(X[i * d + j] - y[i]);
  });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Tensor& X = a.value();
  require_row_vec("layer_norm", X, gamma.value());
  require_row_vec("layer_norm", X, beta.value());
  const std::size_t n = X.rows(), d = X.cols();
  const Tensor& G = gamma.value();
  const Tensor& B = beta.value();
  Tensor Y(X.shape());
  // Saved per-row statistics: normalized input and inverse std.
  auto xhat = std::make_shared<Tensor>(X.shape());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += X[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = X[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (X[i * d + j] - mu) * is;
      (*xhat)[i * d + j] = h;
      Y[i * d + j] = h * G[j] + B[j];
    }
  }
  const std::size_t ia = a.id(), ig = gamma.id(), ib = beta.id();
  return a.tape().record(
      std::move(Y), {a, gamma, beta},
      [ia, ig, ib, n, d, xhat, inv_std](Tape& t, std::size_t self) {
        const Tensor& dy = t.out_grad(self);
        if (Tensor* gg = t.grad_buffer(ig)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[i * d + j] * (*xhat)[i * d + j];
        }
        if (Tensor* gb = t.grad_buffer(ib)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*gb)[j] += dy[i * d + j];
        }
        if (Tensor* gx = t.grad_buffer(ia)) {
          const Tensor& G = t.value(ig);
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < n; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = dy[i * d + j] * G[j];
              m1 += dh;
              m2 += dh * (*xhat)[i * d + j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = dy[i * d + j] * G[j];
              (*gx)[i * d + j] += (*inv_std)[i] * (dh - m1 - (*xhat)[i * d + j] * m2);
            }
          }
        }
      });
}

Var sum(Var a) {
  const Tensor& X = a.value();
  double s = 0.0;
  for (double v : X.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const double g = t.out_grad(self)[0];
    for (auto& v : ga->data()) v += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_rows(Var a) {
  const Tensor& X = a.value();
  require_rank("sum_rows", X, 2);
  const std::size_t n = X.rows(), d = X.cols();
  Tensor y({d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[j] += X[i * d + j];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n, d](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) (*ga)[i * d + j] += g[j];
  });
}

Var sum_cols(Var a) {
  const Tensor& X = a.value();
  require_rank("sum_cols", X, 2);
  const std::size_t n = X.rows(), d = X.cols();
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i] += X[i * d + j];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n, d](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) (*ga)[i * d + j] += g[i];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& X = a.value();
  require_rank("slice_cols", X, 2);
  if (start + count > X.cols() || count == 0) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(X.shape()));
  }
  const std::size_t n = X.rows(), d = X.cols();
  Tensor y({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) y[i * count + j] = X[i * d + start + j];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, n, d, start, count](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) (*ga)[i * d + start + j] += g[i * count + j];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts[0].value().rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    require_rank("concat_cols", P, 2);
    if (P.rows() != n) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(P.shape()));
    }
    widths.push_back(P.cols());
    ids.push_back(p.id());
    total += P.cols();
  }
  Tensor y({n, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) y[i * total + off + j] = P[i * widths[k] + j];
    off += widths[k];
  }
  return parts[0].tape().record(
      std::move(y), parts, [ids, widths, n, total](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor* gk = t.grad_buffer(ids[k])) {
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                (*gk)[i * widths[k] + j] += g[i * total + off + j];
          }
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t d = parts[0].value().cols();
  std::vector<std::size_t> sizes, ids;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    require_rank("concat_rows", P, 2);
    if (P.cols() != d) {
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(P.shape()));
    }
    sizes.push_back(P.size());
    ids.push_back(p.id());
    rows += P.rows();
  }
  std::vector<double> data;
  data.reserve(rows * d);
  for (const Var& p : parts) {
    const auto v = p.value().data();
    data.insert(data.end(), v.begin(), v.end());
  }
  return parts[0].tape().record(
      Tensor({rows, d}, std::move(data)), parts, [ids, sizes](Tape& t, std::size_t self) {
        const Tensor& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor* gk = t.grad_buffer(ids[k])) {
            for (std::size_t i = 0; i < sizes[k]; ++i) (*gk)[i] += g[off + i];
          }
          off += sizes[k];
        }
      });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_buffer(ia);
    if (!ga) return;
    const Tensor& g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  const Tensor& T = table.value();
  require_rank("gather_rows", T, 2);
  const std::size_t d = T.cols();
  for (std::size_t r : indices) {
    if (r >= T.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(r) + " out of range for " +
                       shape_str(T.shape()));
    }
  }
  Tensor y({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] = T[indices[i] * d + j];
  const std::size_t it = table.id();
  return table.tape().record(
      std::move(y), {table}, [it, d, idx = std::move(indices)](Tape& t, std::size_t self) {
        Tensor* gt = t.grad_buffer(it);
        if (!gt) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < d; ++j) (*gt)[idx[i] * d + j] += g[i * d + j];
      });
}

Var pick(Var a, std::span<const std::size_t> cols) {
  const Tensor& X = a.value();
  require_rank("pick", X, 2);
  if (cols.size() != X.rows()) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " +
                     shape_str(X.shape()));
  }
  const std::size_t n = X.rows(), d = X.cols();
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= d) throw ShapeError("pick: column index out of range for " + shape_str(X.shape()));
    y[i] = X[i * d + cols[i]];
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(y), {a},
      [ia, d, idx = std::vector<std::size_t>(cols.begin(), cols.end())](Tape& t, std::size_t self) {
        Tensor* ga = t.grad_buffer(ia);
        if (!ga) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t i = 0; i < idx.size(); ++i) (*ga)[i * d + idx[i]] += g[i];
      });
}

Var scatter_onehot(Var values, std::span<const std::size_t> cols, std::size_t width) {
  const Tensor& v = values.value();
  require_rank("scatter_onehot", v, 1);
  if (cols.size() != v.dim(0)) {
    throw ShapeError("scatter_onehot: " + std::to_string(cols.size()) + " indices for " +
                     shape_str(v.shape()));
  }
  const std::size_t n = v.dim(0);
  Tensor y({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= width) throw ShapeError("scatter_onehot: index out of range");
    y[i * width + cols[i]] = v[i];
  }
  const std::size_t iv = values.id();
  return values.tape().record(
      std::move(y), {values},
      [iv, width, idx = std::vector<std::size_t>(cols.begin(), cols.end())](Tape& t, std::size_t self) {
        Tensor* gv = t.grad_buffer(iv);
        if (!gv) return;
        const Tensor& g = t.out_grad(self);
        for (std::size_t i = 0; i < idx.size(); ++i) (*gv)[i] += g[i * width + idx[i]];
      });
}

Var multi_head_attention(Var q, Var k, Var v, std::size_t heads) {
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  require_rank("multi_head_attention", Q, 2);
  require_same("multi_head_attention", Q, K);
  require_same("multi_head_attention", Q, V);
  const std::size_t n = Q.rows(), d = Q.cols();
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor O({n, d});
  auto probs = std::make_shared<std::vector<RowMat>>(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto off = static_cast<Eigen::Index>(h * dh);
    const auto w = static_cast<Eigen::Index>(dh);
    RowMat& P = (*probs)[h];
    P.noalias() = scale * (as_mat(Q).middleCols(off, w) * as_mat(K).middleCols(off, w).transpose());
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      auto row = P.row(r).array();
      row = (row - row.maxCoeff()).exp();
      row /= row.sum();
    }
    as_mat(O).middleCols(off, w).noalias() = P * as_mat(V).middleCols(off, w);
  }
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      std::move(O), {q, k, v}, [iq, ik, iv, heads, dh, scale, probs](Tape& t, std::size_t self) {
        const auto G = as_mat(t.out_grad(self));
        Tensor* gq = t.grad_buffer(iq);
        Tensor* gk = t.grad_buffer(ik);
        Tensor* gv = t.grad_buffer(iv);
        const auto Qm = as_mat(t.value(iq));
        const auto Km = as_mat(t.value(ik));
        const auto Vm = as_mat(t.value(iv));
        RowMat dP;
        for (std::size_t h = 0; h < heads; ++h) {
          const auto off = static_cast<Eigen::Index>(h * dh);
          const auto w = static_cast<Eigen::Index>(dh);
          const RowMat& P = (*probs)[h];
          const auto Gh = G.middleCols(off, w);
          if (gv) as_mat(*gv).middleCols(off, w).noalias() += P.transpose() * Gh;
          if (!gq && !gk) continue;
          dP.noalias() = Gh * Vm.middleCols(off, w).transpose();
          const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
          dP = (P.array() * (dP.array().colwise() - rowdot.array())).matrix() * scale;
          if (gq) as_mat(*gq).middleCols(off, w).noalias() += dP * Km.middleCols(off, w);
          if (gk) as_mat(*gk).middleCols(off, w).noalias() += dP.transpose() * Qm.middleCols(off, w);
        }
      });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Gradient drivers

namespace {

Var checked_root(const ScalarFn& f, Tape& tape, std::span<const Var> vars) {
  Var out = f(tape, vars);
  if (out.value().size() != 1) {
    throw ShapeError("value_and_grad: function must return a scalar, got " +
                     shape_str(out.shape()));
  }
  return out;
}

}  // namespace

ValueAndGrad value_and_grad(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.parameter(p));
  Var out = checked_root(f, tape, vars);
  tape.backward(out);
  ValueAndGrad r;
  r.value = out.value()[0];
  for (const Var& v : vars) r.grads.push_back(tape.grad(v));
  return r;
}

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.constant(p));
  return checked_root(f, tape, vars).value()[0];
}

std::vector<Tensor> finite_diff_grad(const ScalarFn& f, std::span<const Tensor> params,
                                     double h) {
  if (!(h > 0.0)) throw Error("finite_diff_grad: step must be positive");
  std::vector<Tensor> work(params.begin(), params.end());
  std::vector<Tensor> grads;
  for (std::size_t p = 0; p < work.size(); ++p) {
    Tensor g(work[p].shape());
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double orig = work[p][i];
      work[p][i] = orig + h;
      const double fp = evaluate(f, work);
      work[p][i] = orig - h;
      const double fm = evaluate(f, work);
      work[p][i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw Error("finite_diff_grad: non-finite evaluation at parameter " +
                    std::to_string(p) + " element " + std::to_string(i));
      }
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(std::span<const Tensor> a, std::span<const Tensor> b,
                          double floor) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: tensor count mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].shape() != b[k].shape()) {
      throw ShapeError("max_relative_error: shape mismatch " + shape_str(a[k].shape()) +
                       " vs " + shape_str(b[k].shape()));
    }
    double diff = 0.0;
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double d = a[k][i] - b[k][i];
      diff += d * d;
    }
    const double denom = std::max({l2_norm(a[k]), l2_norm(b[k]), floor});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

}  // namespace patchasd

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

#include "patchasd/embed_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace patchasd {

PoolParams init_pool_params(std::size_t dim, Rng& rng) {
  const std::size_t hidden = std::max<std::size_t>(1, dim / 2);
  return {init_linear(dim, hidden, rng), init_linear(hidden, dim, rng)};
}

Var attentive_stats_pool(Var tokens, const PoolParamsT<Var>& p, double eps) {
  const Tensor& t = tokens.value();
  if (t.rank() != 2) throw ShapeError("attentive_stats_pool: expected [n x dim], got " + shape_str(t.shape()));
  if (t.rows() == 0) throw Error("attentive_stats_pool: no tokens");
  const Var logits = apply(p.attn_out, ad::tanh(apply(p.attn_in, tokens)));
  const Var alpha = ad::softmax(logits, 0);
  const Var mean = ad::sum_rows(ad::mul(alpha, tokens));
  const Var second = ad::sum_rows(ad::mul(alpha, ad::square(tokens)));
  const Var var = ad::clamp(ad::sub(second, ad::square(mean)), 0.0,
                            std::numeric_limits<double>::infinity());
  const Var std = ad::sqrt(ad::add_scalar(var, eps));
  const std::size_t d = t.cols();
  const Var parts[] = {ad::reshape(mean, {1, d}), ad::reshape(std, {1, d})};
  return ad::concat_cols(parts);
}

Var project(Var u, Var weight, Var bias) {
  return ad::add_row(ad::matmul(u, weight), bias);
}

void ArcFaceConfig::validate() const {
  if (!(scale > 0.0)) throw Error("arcface: scale must be positive");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) {
    throw Error("arcface: margin must lie in [0, pi/2)");
  }
}

std::vector<double> angles(const Tensor& x, const Tensor& W) {
  if (x.rank() != 1 || W.rank() != 2 || W.rows() != x.dim(0)) {
    throw ShapeError("angles: embedding " + shape_str(x.shape()) + " vs class matrix " +
                     shape_str(W.shape()));
  }
  const double xn = l2_norm(x);
  if (!(xn > 0.0)) throw Error("angles: zero-norm embedding");
  const std::size_t d = W.rows(), c = W.cols();
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) {
    double dot = 0.0, wn = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += W.at(k, j) * x[k];
      wn += W.at(k, j) * W.at(k, j);
    }
    wn = std::sqrt(wn);
    if (!(wn > 0.0)) throw Error("angles: zero-norm class column " + std::to_string(j));
    const double lim = 1.0 - ad::kArccosClamp;
    out[j] = std::acos(std::clamp(dot / (wn * xn), -lim, lim));
  }
  return out;
}

Var arcface_loss(Var X, std::span<const std::size_t> labels, Var W, const ArcFaceConfig& cfg) {
  cfg.validate();
  const Tensor& x = X.value();
  const Tensor& w = W.value();
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows()) {
    throw ShapeError("arcface_loss: embeddings " + shape_str(x.shape()) + " vs class matrix " +
                     shape_str(w.shape()));
  }
  const std::size_t n = x.rows(), c = w.cols();
  if (n == 0) throw Error("arcface_loss: empty batch");
  if (c < 2) throw Error("arcface_loss: need at least 2 classes");
  if (labels.size() != n) {
    throw ShapeError("arcface_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " embeddings");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw Error("arcface_loss: invalid label " + std::to_string(labels[i]) + " at row " +
                  std::to_string(i) + " (" + std::to_string(c) + " classes)");
    }
  }

  const Var x_norm = ad::sqrt(ad::sum_cols(ad::square(X)));
  const Var w_norm = ad::sqrt(ad::sum_rows(ad::square(W)));
  for (double v : x_norm.value().data())
    if (!(v > 0.0)) throw Error("arcface_loss: zero-norm embedding");
  for (double v : w_norm.value().data())
    if (!(v > 0.0)) throw Error("arcface_loss: zero-norm class column");

  const Var xn = ad::mul_col(X, ad::reciprocal(x_norm));
  const Var wn = ad::mul_row(W, ad::reciprocal(w_norm));
  const double lim = 1.0 - ad::kArccosClamp;
  const Var cosine = ad::clamp(ad::matmul(xn, wn), -lim, lim);

  const Var target_cos = ad::pick(cosine, labels);
  const Var target_sin = ad::sqrt(ad::add_scalar(ad::scale(ad::square(target_cos), -1.0), 1.0));
  const Var target_margin = ad::add(ad::scale(target_cos, std::cos(cfg.margin)),
                                    ad::scale(target_sin, -std::sin(cfg.margin)));
  const Var delta = ad::scatter_onehot(ad::sub(target_margin, target_cos), labels, c);
  const Var logits = ad::scale(ad::add(cosine, delta), cfg.scale);
  const Var per_sample =
      ad::sub(ad::logsumexp_rows(logits), ad::scale(target_margin, cfg.scale));
  return ad::mean(per_sample);
}

double arcface_loss(const Tensor& X, std::span<const std::size_t> labels, const Tensor& W,
                    const ArcFaceConfig& cfg) {
  Tape tape;
  return arcface_loss(tape.constant(X), labels, tape.constant(W), cfg).value().item();
}

}  // namespace patchasd

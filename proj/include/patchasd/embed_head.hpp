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

#pragma once

#include <span>
#include <vector>

#include "patchasd/layers.hpp"

namespace patchasd {

// Channel-wise attention MLP: dim -> dim/2 (tanh) -> dim.
template <typename T>
struct PoolParamsT {
  LinearT<T> attn_in;
  LinearT<T> attn_out;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    LinearT<T>::visit(self.attn_in, prefix + ".attn_in", f);
    LinearT<T>::visit(self.attn_out, prefix + ".attn_out", f);
  }
};

using PoolParams = PoolParamsT<Tensor>;

PoolParams init_pool_params(std::size_t dim, Rng& rng);

inline constexpr double kPoolEps = 1e-8;

// Attentive statistics pooling over tokens [n x dim] -> [1 x 2*dim].
// Attention weights are softmax-normalized over tokens separately for each
// channel; the output is [weighted mean | sqrt(weighted E[t^2] - mean^2 + eps)].
Var attentive_stats_pool(Var tokens, const PoolParamsT<Var>& p, double eps = kPoolEps);

// u[N x in] -> u P + b, [N x out].
Var project(Var u, Var weight, Var bias);

struct ArcFaceConfig {
  double scale = 30.0;   // s
  double margin = 0.5;   // m, radians

  void validate() const;
};

// Angle between x [d] and every column of W [d x c], arccos of the clamped
// cosine. Throws on zero-norm inputs.
std::vector<double> angles(const Tensor& x, const Tensor& W);

// Additive angular margin loss over embeddings X [N x d] and class matrix
// W [d x c] whose column j is the registered embedding of class j:
//   L = mean_i -log( e^{s cos(t_yi + m)} / (e^{s cos(t_yi + m)} + sum_{j != yi} e^{s cos t_j}) )
// cos(t + m) is expanded as cos t cos m - sin t sin m with the cosine clamped
// to +-(1 - 1e-7).
Var arcface_loss(Var X, std::span<const std::size_t> labels, Var W, const ArcFaceConfig& cfg);

double arcface_loss(const Tensor& X, std::span<const std::size_t> labels, const Tensor& W,
                    const ArcFaceConfig& cfg);

}  // namespace patchasd

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

// Parameter bundles are templated on their leaf type: T = Tensor holds
// values (and gradients), T = Var holds the same parameters bound to a Tape.
// Each bundle exposes a static visit(self, prefix, f) calling f(name, leaf)
// in a fixed order; serialization, binding and the optimizer all rely on it.

#pragma once

#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "patchasd/autodiff.hpp"
#include "patchasd/random.hpp"
#include "patchasd/tensor.hpp"

namespace patchasd {

template <typename T>
struct LinearT {
  T weight;  // [in x out]
  T bias;    // [out]

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + ".weight", self.weight);
    f(prefix + ".bias", self.bias);
  }
};

template <typename T>
struct LayerNormT {
  T weight;
  T bias;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + ".weight", self.weight);
    f(prefix + ".bias", self.bias);
  }
};

using Linear = LinearT<Tensor>;
using LayerNormParams = LayerNormT<Tensor>;

Linear init_linear(std::size_t in, std::size_t out, Rng& rng, double stddev = 0.02);
LayerNormParams init_layer_norm(std::size_t dim);

// x[n x in] -> [n x out]
inline Var apply(const LinearT<Var>& l, Var x) {
  return ad::add_row(ad::matmul(x, l.weight), l.bias);
}

inline Var apply(const LayerNormT<Var>& ln, Var x, double eps = 1e-5) {
  return ad::layer_norm(x, ln.weight, ln.bias, eps);
}

// Truncated-normal tensor (+-2 sigma).
Tensor trunc_normal(Shape shape, double stddev, Rng& rng);

// Collects (name, leaf*) pairs from any bundle with a static visit().
template <typename Bundle, typename Leaf>
std::vector<std::pair<std::string, Leaf*>> collect(Bundle& b, const std::string& prefix = "") {
  std::vector<std::pair<std::string, Leaf*>> out;
  std::remove_const_t<Bundle>::visit(b, prefix, [&](const std::string& name, Leaf& leaf) { out.emplace_back(name, &leaf); });
  return out;
}

// Binds `values` onto `tape`. `shell` must already have the structure of
// `values` (e.g. the same number of encoder blocks).
template <typename VarBundle, typename TensorBundle>
VarBundle bind_bundle(Tape& tape, const TensorBundle& values, VarBundle shell, bool trainable) {
  auto dst = collect<VarBundle, Var>(shell);
  auto src = collect<const TensorBundle, const Tensor>(values);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    *dst[i].second = trainable ? tape.parameter(*src[i].second) : tape.constant(*src[i].second);
  }
  return shell;
}

// True for layer-norm and bias parameters, which are exempt from weight decay.
bool is_no_decay_param(const std::string& name);

}  // namespace patchasd

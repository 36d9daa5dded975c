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

// Patch-token transformer encoder. Pre-norm blocks
//   x += MHSA(LN1(x));  x += MLP(LN2(x))
// with GELU, no class token and a final layer norm. Position is a learned
// frequency-row embedding plus a learned time-column embedding, so clips of
// any length up to max_time_cols patches share one table.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patchasd/augment.hpp"
#include "patchasd/checkpoint.hpp"
#include "patchasd/layers.hpp"

namespace patchasd {

struct ViTConfig {
  std::size_t depth = 2;
  std::size_t dim = 64;
  std::size_t heads = 2;
  double mlp_ratio = 4.0;
  std::size_t patch = 16;
  std::size_t max_freq_rows = 8;
  std::size_t max_time_cols = 64;
  double ln_eps = 1e-5;

  std::size_t patch_dim() const { return patch * patch; }
  std::size_t mlp_hidden() const;
  void validate() const;
  friend bool operator==(const ViTConfig&, const ViTConfig&) = default;
};

template <typename T>
struct EncoderBlockT {
  LayerNormT<T> ln1;
  LinearT<T> q, k, v, o;
  LayerNormT<T> ln2;
  LinearT<T> fc1, fc2;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    LayerNormT<T>::visit(self.ln1, prefix + ".ln1", f);
    LinearT<T>::visit(self.q, prefix + ".attn.q", f);
    LinearT<T>::visit(self.k, prefix + ".attn.k", f);
    LinearT<T>::visit(self.v, prefix + ".attn.v", f);
    LinearT<T>::visit(self.o, prefix + ".attn.o", f);
    LayerNormT<T>::visit(self.ln2, prefix + ".ln2", f);
    LinearT<T>::visit(self.fc1, prefix + ".mlp.fc1", f);
    LinearT<T>::visit(self.fc2, prefix + ".mlp.fc2", f);
  }
};

template <typename T>
struct ViTParamsT {
  LinearT<T> patch_proj;  // [patch_dim x dim]
  T pos_freq;             // [max_freq_rows x dim]
  T pos_time;             // [max_time_cols x dim]
  std::vector<EncoderBlockT<T>> blocks;
  LayerNormT<T> final_ln;

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    LinearT<T>::visit(self.patch_proj, prefix + ".patch_proj", f);
    f(prefix + ".pos_freq", self.pos_freq);
    f(prefix + ".pos_time", self.pos_time);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      EncoderBlockT<T>::visit(self.blocks[i], prefix + ".blocks." + std::to_string(i), f);
    }
    LayerNormT<T>::visit(self.final_ln, prefix + ".final_ln", f);
  }
};

using ViTParams = ViTParamsT<Tensor>;

// Truncated-normal (sigma 0.02) weights and positional tables, zero biases,
// unit layer-norm scales.
ViTParams init_vit_params(const ViTConfig& cfg, Rng& rng);

// Expected shape of every parameter for `cfg`, in visit order.
std::vector<std::pair<std::string, Shape>> vit_param_shapes(const ViTConfig& cfg,
                                                            const std::string& prefix = "vit");

// Tokens [n_patches x patch_dim] on a grid of rows_freq x cols_time patches
// (raster order, frequency-major) -> [n_patches x dim].
Var encode(const ViTParamsT<Var>& p, const ViTConfig& cfg, Var tokens, std::size_t rows_freq,
           std::size_t cols_time);

// Inference convenience: [n_patches x dim].
Tensor encode(const ViTParams& p, const ViTConfig& cfg, const PatchGrid& grid);

// Places every tensor of `p` on `tape` as a parameter (or a constant).
ViTParamsT<Var> bind(Tape& tape, const ViTParams& p, bool trainable);

void write_vit_config(TensorArchive& archive, const ViTConfig& cfg, const std::string& prefix = "vit");
ViTConfig read_vit_config(const TensorArchive& archive, const std::string& prefix = "vit");

void save_vit_checkpoint(const std::filesystem::path& path, const ViTConfig& cfg,
                         const ViTParams& params);
// Validates every tensor against the stored config; errors name the tensor.
std::pair<ViTConfig, ViTParams> load_vit_checkpoint(const std::filesystem::path& path);

// Copies archive tensors into a freshly shaped bundle for `cfg`. Throws
// CheckpointError naming any missing or mis-shaped tensor.
ViTParams vit_params_from_archive(const TensorArchive& archive, const ViTConfig& cfg,
                                  const std::string& prefix = "vit");

}  // namespace patchasd

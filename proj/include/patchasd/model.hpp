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

// Full clip embedder: patches -> encoder -> attentive statistics pooling ->
// linear projection, plus the ArcFace class matrix used during training.

#pragma once

#include <filesystem>
#include <optional>

#include "patchasd/checkpoint.hpp"
#include "patchasd/embed_head.hpp"
#include "patchasd/vit.hpp"

namespace patchasd {

struct ModelConfig {
  ViTConfig vit;
  std::size_t embed_dim = 128;
  std::size_t num_classes = 2;
  ArcFaceConfig arcface;
  double pool_eps = kPoolEps;

  void validate() const;
};

template <typename T>
struct ModelParamsT {
  ViTParamsT<T> vit;
  PoolParamsT<T> pool;
  LinearT<T> proj;      // [2*dim x embed_dim]
  T arcface_weight;     // [embed_dim x num_classes]

  template <typename Self, typename F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    (void)prefix;
    ViTParamsT<T>::visit(self.vit, "vit", f);
    PoolParamsT<T>::visit(self.pool, "pool", f);
    LinearT<T>::visit(self.proj, "proj", f);
    f("arcface.weight", self.arcface_weight);
  }
};

using ModelParams = ModelParamsT<Tensor>;

ModelParams init_model(const ModelConfig& cfg, Rng& rng);
ModelParamsT<Var> bind(Tape& tape, const ModelParams& p, bool trainable);

// Zero tensors with the structure of `p` (gradient accumulators).
ModelParams zeros_like(const ModelParams& p);

// [n_patches x patch_dim] tokens -> clip embedding [1 x embed_dim].
Var embed(const ModelParamsT<Var>& p, const ModelConfig& cfg, Var tokens, std::size_t rows_freq,
          std::size_t cols_time);

// Inference: clip embedding as a rank-1 tensor [embed_dim].
Tensor embed(const ModelParams& p, const ModelConfig& cfg, const PatchGrid& grid);

TensorArchive model_to_archive(const ModelConfig& cfg, const ModelParams& p);

// When `expected` is given, tensors are validated against it instead of the
// stored config; mismatches raise CheckpointError naming each tensor.
std::pair<ModelConfig, ModelParams> model_from_archive(const TensorArchive& archive,
                                                       const std::optional<ModelConfig>& expected = {});

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& p);
std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path);

}  // namespace patchasd

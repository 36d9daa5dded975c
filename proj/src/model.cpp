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

#include "patchasd/model.hpp"

#include <sstream>

namespace patchasd {

void ModelConfig::validate() const {
  vit.validate();
  arcface.validate();
  if (embed_dim == 0) throw Error("model config: embed_dim must be positive");
  if (num_classes < 2) throw Error("model config: need at least 2 classes");
}

ModelParams init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.vit = init_vit_params(cfg.vit, rng);
  p.pool = init_pool_params(cfg.vit.dim, rng);
  p.proj = init_linear(2 * cfg.vit.dim, cfg.embed_dim, rng);
  p.arcface_weight = trunc_normal({cfg.embed_dim, cfg.num_classes}, 0.02, rng);
  return p;
}

ModelParamsT<Var> bind(Tape& tape, const ModelParams& p, bool trainable) {
  ModelParamsT<Var> shell;
  shell.vit.blocks.resize(p.vit.blocks.size());
  return bind_bundle(tape, p, std::move(shell), trainable);
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  ModelParams::visit(z, "", [](const std::string&, Tensor& t) { t = Tensor::zeros(t.shape()); });
  return z;
}

Var embed(const ModelParamsT<Var>& p, const ModelConfig& cfg, Var tokens, std::size_t rows_freq,
          std::size_t cols_time) {
  const Var encoded = encode(p.vit, cfg.vit, tokens, rows_freq, cols_time);
  const Var pooled = attentive_stats_pool(encoded, p.pool, cfg.pool_eps);
  return project(pooled, p.proj.weight, p.proj.bias);
}

Tensor embed(const ModelParams& p, const ModelConfig& cfg, const PatchGrid& grid) {
  Tape tape;
  const auto vars = bind(tape, p, false);
  const Var x = embed(vars, cfg, tape.constant(grid.tokens()), grid.rows_freq, grid.cols_time);
  return x.value().reshaped({cfg.embed_dim});
}

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

TensorArchive model_to_archive(const ModelConfig& cfg, const ModelParams& p) {
  TensorArchive a;
  write_vit_config(a, cfg.vit);
  a.set_meta("model.embed_dim", std::to_string(cfg.embed_dim));
  a.set_meta("model.num_classes", std::to_string(cfg.num_classes));
  a.set_meta("model.arcface_scale", fmt_double(cfg.arcface.scale));
  a.set_meta("model.arcface_margin", fmt_double(cfg.arcface.margin));
  a.set_meta("model.pool_eps", fmt_double(cfg.pool_eps));
  ModelParams::visit(p, "", [&](const std::string& name, const Tensor& t) { a.add(name, t); });
  return a;
}

std::pair<ModelConfig, ModelParams> model_from_archive(const TensorArchive& archive,
                                                       const std::optional<ModelConfig>& expected) {
  ModelConfig stored;
  stored.vit = read_vit_config(archive);
  auto num = [&](const std::string& key) {
    const std::string& v = archive.require_meta(key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint: metadata '" + key + "' is not a number: '" + v + "'");
    }
  };
  stored.embed_dim = static_cast<std::size_t>(num("model.embed_dim"));
  stored.num_classes = static_cast<std::size_t>(num("model.num_classes"));
  stored.arcface.scale = num("model.arcface_scale");
  stored.arcface.margin = num("model.arcface_margin");
  stored.pool_eps = num("model.pool_eps");

  const ModelConfig cfg = expected.value_or(stored);
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: invalid config: ") + e.what());
  }
  Rng rng(0);
  ModelParams p = init_model(cfg, rng);
  std::vector<std::string> problems;
  ModelParams::visit(p, "", [&](const std::string& name, Tensor& t) {
    if (!archive.contains(name)) {
      problems.push_back(name + " (missing)");
      return;
    }
    const Tensor& src = archive.get(name);
    if (src.shape() != t.shape()) {
      problems.push_back(name + " (shape " + shape_str(src.shape()) + ", expected " +
                         shape_str(t.shape()) + ")");
      return;
    }
    t = src;
  });
  if (!problems.empty()) {
    std::string msg = "checkpoint: tensor shape mismatch:";
    for (const auto& s : problems) msg += " " + s + ";";
    throw CheckpointError(msg);
  }
  return {cfg, std::move(p)};
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& p) {
  save_archive(path, model_to_archive(cfg, p));
}

std::pair<ModelConfig, ModelParams> load_model(const std::filesystem::path& path) {
  return model_from_archive(load_archive(path));
}

}  // namespace patchasd

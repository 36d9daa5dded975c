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

#include "patchasd/vit.hpp"

#include <cmath>
#include <sstream>

namespace patchasd {

Tensor trunc_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = truncated_normal(rng, stddev);
  return t;
}

Linear init_linear(std::size_t in, std::size_t out, Rng& rng, double stddev) {
  return {trunc_normal({in, out}, stddev, rng), Tensor::zeros({out})};
}

LayerNormParams init_layer_norm(std::size_t dim) {
  return {Tensor::full({dim}, 1.0), Tensor::zeros({dim})};
}

bool is_no_decay_param(const std::string& name) {
  if (name.ends_with(".bias")) return true;
  return name.find("ln1.") != std::string::npos || name.find("ln2.") != std::string::npos ||
         name.find("final_ln.") != std::string::npos;
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::lround(mlp_ratio * dim));
}

void ViTConfig::validate() const {
  if (depth < 1) throw Error("vit config: depth must be >= 1");
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw Error("vit config: dim " + std::to_string(dim) + " not divisible by heads " +
                std::to_string(heads));
  }
  if (patch == 0 || max_freq_rows == 0 || max_time_cols == 0 || mlp_hidden() == 0) {
    throw Error("vit config: patch, positional extents and mlp width must be positive");
  }
}

ViTParams init_vit_params(const ViTConfig& cfg, Rng& rng) {
  cfg.validate();
  ViTParams p;
  p.patch_proj = init_linear(cfg.patch_dim(), cfg.dim, rng);
  p.pos_freq = trunc_normal({cfg.max_freq_rows, cfg.dim}, 0.02, rng);
  p.pos_time = trunc_normal({cfg.max_time_cols, cfg.dim}, 0.02, rng);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    EncoderBlockT<Tensor> b;
    b.ln1 = init_layer_norm(cfg.dim);
    b.q = init_linear(cfg.dim, cfg.dim, rng);
    b.k = init_linear(cfg.dim, cfg.dim, rng);
    b.v = init_linear(cfg.dim, cfg.dim, rng);
    b.o = init_linear(cfg.dim, cfg.dim, rng);
    b.ln2 = init_layer_norm(cfg.dim);
    b.fc1 = init_linear(cfg.dim, cfg.mlp_hidden(), rng);
    b.fc2 = init_linear(cfg.mlp_hidden(), cfg.dim, rng);
    p.blocks.push_back(std::move(b));
  }
  p.final_ln = init_layer_norm(cfg.dim);
  return p;
}

std::vector<std::pair<std::string, Shape>> vit_param_shapes(const ViTConfig& cfg,
                                                            const std::string& prefix) {
  Rng rng(0);
  const ViTParams p = init_vit_params(cfg, rng);
  std::vector<std::pair<std::string, Shape>> out;
  ViTParams::visit(p, prefix, [&](const std::string& name, const Tensor& t) {
    out.emplace_back(name, t.shape());
  });
  return out;
}

ViTParamsT<Var> bind(Tape& tape, const ViTParams& p, bool trainable) {
  ViTParamsT<Var> shell;
  shell.blocks.resize(p.blocks.size());
  return bind_bundle(tape, p, std::move(shell), trainable);
}

namespace {

Var attention(const EncoderBlockT<Var>& b, const ViTConfig& cfg, Var x) {
  const Var heads = ad::multi_head_attention(apply(b.q, x), apply(b.k, x), apply(b.v, x), cfg.heads);
  return apply(b.o, heads);
}

}  // namespace

Var encode(const ViTParamsT<Var>& p, const ViTConfig& cfg, Var tokens, std::size_t rows_freq,
           std::size_t cols_time) {
  const Tensor& t = tokens.value();
  if (t.rank() != 2 || t.cols() != cfg.patch_dim() || t.rows() != rows_freq * cols_time) {
    throw ShapeError("encode: tokens " + shape_str(t.shape()) + " do not match grid (" +
                     std::to_string(rows_freq) + ", " + std::to_string(cols_time) +
                     ") of " + std::to_string(cfg.patch_dim()) + "-dim patches");
  }
  if (rows_freq > cfg.max_freq_rows || cols_time > cfg.max_time_cols) {
    throw Error("encode: grid (" + std::to_string(rows_freq) + ", " + std::to_string(cols_time) +
                ") exceeds positional table (" + std::to_string(cfg.max_freq_rows) + ", " +
                std::to_string(cfg.max_time_cols) + ")");
  }
  std::vector<std::size_t> row_idx, col_idx;
  row_idx.reserve(t.rows());
  col_idx.reserve(t.rows());
  for (std::size_t r = 0; r < rows_freq; ++r)
    for (std::size_t c = 0; c < cols_time; ++c) {
      row_idx.push_back(r);
      col_idx.push_back(c);
    }
  Var x = apply(p.patch_proj, tokens);
  x = ad::add(x, ad::gather_rows(p.pos_freq, std::move(row_idx)));
  x = ad::add(x, ad::gather_rows(p.pos_time, std::move(col_idx)));
  for (const auto& b : p.blocks) {
    x = ad::add(x, attention(b, cfg, apply(b.ln1, x, cfg.ln_eps)));
    const Var h = ad::gelu(apply(b.fc1, apply(b.ln2, x, cfg.ln_eps)));
    x = ad::add(x, apply(b.fc2, h));
  }
  return apply(p.final_ln, x, cfg.ln_eps);
}

Tensor encode(const ViTParams& p, const ViTConfig& cfg, const PatchGrid& grid) {
  Tape tape;
  const auto vars = bind(tape, p, false);
  return encode(vars, cfg, tape.constant(grid.tokens()), grid.rows_freq, grid.cols_time).value();
}

void write_vit_config(TensorArchive& archive, const ViTConfig& cfg, const std::string& prefix) {
  archive.set_meta(prefix + ".depth", std::to_string(cfg.depth));
  archive.set_meta(prefix + ".dim", std::to_string(cfg.dim));
  archive.set_meta(prefix + ".heads", std::to_string(cfg.heads));
  std::ostringstream r;
  r.precision(17);
  r << cfg.mlp_ratio;
  archive.set_meta(prefix + ".mlp_ratio", r.str());
  archive.set_meta(prefix + ".patch", std::to_string(cfg.patch));
  archive.set_meta(prefix + ".max_freq_rows", std::to_string(cfg.max_freq_rows));
  archive.set_meta(prefix + ".max_time_cols", std::to_string(cfg.max_time_cols));
  std::ostringstream e;
  e.precision(17);
  e << cfg.ln_eps;
  archive.set_meta(prefix + ".ln_eps", e.str());
}

ViTConfig read_vit_config(const TensorArchive& archive, const std::string& prefix) {
  auto num = [&](const std::string& key) {
    const std::string& v = archive.require_meta(prefix + "." + key);
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw CheckpointError("checkpoint: metadata '" + prefix + "." + key +
                            "' is not a number: '" + v + "'");
    }
  };
  ViTConfig cfg;
  cfg.depth = static_cast<std::size_t>(num("depth"));
  cfg.dim = static_cast<std::size_t>(num("dim"));
  cfg.heads = static_cast<std::size_t>(num("heads"));
  cfg.mlp_ratio = num("mlp_ratio");
  cfg.patch = static_cast<std::size_t>(num("patch"));
  cfg.max_freq_rows = static_cast<std::size_t>(num("max_freq_rows"));
  cfg.max_time_cols = static_cast<std::size_t>(num("max_time_cols"));
  if (archive.meta(prefix + ".ln_eps")) cfg.ln_eps = num("ln_eps");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint: invalid stored config: ") + e.what());
  }
  return cfg;
}

ViTParams vit_params_from_archive(const TensorArchive& archive, const ViTConfig& cfg,
                                  const std::string& prefix) {
  cfg.validate();
  Rng rng(0);
  ViTParams p = init_vit_params(cfg, rng);
  std::vector<std::string> problems;
  ViTParams::visit(p, prefix, [&](const std::string& name, Tensor& t) {
    if (!archive.contains(name)) {
      problems.push_back(name + " (missing)");
      return;
    }
    const Tensor& stored = archive.get(name);
    if (stored.shape() != t.shape()) {
      problems.push_back(name + " (shape " + shape_str(stored.shape()) + ", expected " +
                         shape_str(t.shape()) + ")");
      return;
    }
    t = stored;
  });
  if (!problems.empty()) {
    std::string msg = "checkpoint: shape mismatch for config dim=" + std::to_string(cfg.dim) +
                      " depth=" + std::to_string(cfg.depth) + ":";
    for (const auto& s : problems) msg += " " + s + ";";
    throw CheckpointError(msg);
  }
  return p;
}

void save_vit_checkpoint(const std::filesystem::path& path, const ViTConfig& cfg,
                         const ViTParams& params) {
  TensorArchive a;
  write_vit_config(a, cfg);
  ViTParams::visit(params, "vit", [&](const std::string& name, const Tensor& t) { a.add(name, t); });
  save_archive(path, a);
}

std::pair<ViTConfig, ViTParams> load_vit_checkpoint(const std::filesystem::path& path) {
  const TensorArchive a = load_archive(path);
  const ViTConfig cfg = read_vit_config(a);
  return {cfg, vit_params_from_archive(a, cfg)};
}

}  // namespace patchasd

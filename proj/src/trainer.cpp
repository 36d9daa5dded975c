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

#include "patchasd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "patchasd/parallel.hpp"

namespace patchasd {

// ---------------------------------------------------------------------------
// Vocabulary

LabelVocabulary::LabelVocabulary(std::vector<MetadataTuple> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
  for (std::size_t i = 0; i < labels_.size(); ++i) index_.emplace(labels_[i], i);
}

std::size_t LabelVocabulary::index_of(const MetadataTuple& tuple) const {
  auto it = index_.find(tuple);
  if (it == index_.end()) throw Error("vocabulary: unknown label '" + join_label(tuple) + "'");
  return it->second;
}

LabelVocabulary build_vocabulary(std::span<const MetadataTuple> records) {
  std::set<MetadataTuple> distinct;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.empty() || (!records.empty() && r.size() != records[0].size())) {
      throw Error("vocabulary: record " + std::to_string(i) + " has " + std::to_string(r.size()) +
                  " fields, expected " + std::to_string(records[0].size()));
    }
    for (const auto& f : r) {
      if (f.empty()) throw Error("vocabulary: record " + std::to_string(i) + " has an empty field");
    }
    distinct.insert(r);
  }
  return LabelVocabulary(std::vector<MetadataTuple>(distinct.begin(), distinct.end()));
}

std::string join_label(const MetadataTuple& tuple, char sep) {
  std::string out;
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (i) out.push_back(sep);
    out += tuple[i];
  }
  return out;
}

MetadataTuple split_label(const std::string& key, char sep) {
  MetadataTuple out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = key.find(sep, start);
    out.push_back(key.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

// ---------------------------------------------------------------------------
// Schedule and optimizer

void TrainConfig::validate() const {
  if (batch_size == 0 || grad_accum == 0) throw Error("train config: batch_size and grad_accum must be positive");
  if (!(lr > 0.0)) throw Error("train config: lr must be positive");
  if (warmup_steps > total_steps) {
    throw Error("train config: warmup_steps " + std::to_string(warmup_steps) +
                " exceeds total_steps " + std::to_string(total_steps));
  }
  if (weight_decay < 0.0) throw Error("train config: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw Error("train config: invalid Adam hyperparameters");
  }
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw Error("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                std::to_string(cfg.total_steps));
  }
  if (step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (cfg.total_steps == cfg.warmup_steps) return cfg.lr;
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(std::vector<NamedParam> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.value->shape()));
    v_.push_back(Tensor::zeros(p.value->shape()));
    decay_.push_back(!is_no_decay_param(p.name));
  }
}

void AdamW::step(std::span<const Tensor> grads, double lr) {
  if (grads.size() != params_.size()) throw ShapeError("adamw: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k].value;
    const Tensor& g = grads[k];
    if (g.shape() != p.shape()) {
      throw ShapeError("adamw: gradient " + shape_str(g.shape()) + " for parameter '" +
                       params_[k].name + "' " + shape_str(p.shape()));
    }
    const double shrink = decay_[k] ? 1.0 - lr * weight_decay_ : 1.0;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= shrink;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Every step builds and frees tapes with the same large buffers. Keep that
// memory in the heap instead of handing it back to the OS each time.
void keep_heap_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace

TrainResult train(const TrainProblem& problem, const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (problem.num_examples == 0) throw TrainingError("train: empty dataset");
  keep_heap_memory();
  AdamW opt(problem.params, cfg);

  Rng order_rng(derive_seed(cfg.seed, {0x6f72646572ULL}));
  std::vector<std::size_t> order(problem.num_examples);
  std::size_t cursor = order.size();
  auto next_example = [&] {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    return order[cursor++];
  };

  const std::size_t per_step = cfg.batch_size * cfg.grad_accum;
  TrainResult result;
  std::vector<std::size_t> drawn(per_step);
  std::vector<std::uint64_t> seeds(per_step);
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    for (std::size_t j = 0; j < per_step; ++j) {
      drawn[j] = next_example();
      seeds[j] = derive_seed(cfg.seed, {step, j});
    }
    std::vector<Tensor> grads;
    double loss = 0.0;
    for (std::size_t k = 0; k < cfg.grad_accum; ++k) {
      const std::size_t off = k * cfg.batch_size;
      LossAndGrads r = problem.loss_and_grads(
          std::span<const std::size_t>(drawn).subspan(off, cfg.batch_size),
          std::span<const std::uint64_t>(seeds).subspan(off, cfg.batch_size));
      if (!std::isfinite(r.loss)) {
        throw TrainingError("train: non-finite loss at step " + std::to_string(step));
      }
      const double w = 1.0 / static_cast<double>(cfg.grad_accum);
      loss += w * r.loss;
      if (grads.empty()) {
        grads.reserve(r.grads.size());
        for (auto& g : r.grads) grads.push_back(Tensor::zeros(g.shape()));
      }
      for (std::size_t p = 0; p < grads.size(); ++p)
        for (std::size_t i = 0; i < grads[p].size(); ++i) grads[p][i] += w * r.grads[p][i];
    }
    const double lr = lr_at(step, cfg);
    opt.step(grads, lr);
    result.trace.push_back({step, lr, loss});
    if (on_step) on_step(result.trace.back());
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.precision(17);
  f << "step,lr,loss\n";
  for (const auto& r : trace) f << r.step << ',' << r.lr << ',' << r.loss << '\n';
}

// ---------------------------------------------------------------------------
// ArcFace fine-tuning objective

TrainProblem make_arcface_problem(std::span<const ClipExample> examples, ModelParams& params,
                                  const ModelConfig& cfg, const SpecAugConfig& augment,
                                  std::size_t workers) {
  cfg.validate();
  for (const auto& ex : examples) {
    if (ex.label >= cfg.num_classes) {
      throw Error("train: label " + std::to_string(ex.label) + " outside " +
                  std::to_string(cfg.num_classes) + " classes");
    }
  }
  TrainProblem problem;
  for (auto& [name, t] : collect<ModelParams, Tensor>(params)) problem.params.push_back({name, t});
  problem.num_examples = examples.size();
  problem.loss_and_grads = [examples, &params, cfg, augment, workers](
                               std::span<const std::size_t> batch,
                               std::span<const std::uint64_t> seeds) {
    const std::size_t n = batch.size();
    std::vector<double> losses(n);
    std::vector<std::vector<Tensor>> grads(n);
    parallel_for(n, workers, [&](std::size_t i) {
      const ClipExample& ex = examples[batch[i]];
      Rng rng(seeds[i]);
      const PatchGrid grid = patchify(spec_augment(ex.features, augment, rng), cfg.vit.patch);
      Tape tape;
      ModelParamsT<Var> vars = bind(tape, params, true);
      const Var x = embed(vars, cfg, tape.constant(grid.tokens()), grid.rows_freq, grid.cols_time);
      const std::size_t label = ex.label;
      const Var loss = arcface_loss(x, std::span<const std::size_t>(&label, 1), vars.arcface_weight,
                                    cfg.arcface);
      tape.backward(loss);
      losses[i] = loss.value().item();
      for (auto& [name, v] : collect<ModelParamsT<Var>, Var>(vars)) grads[i].push_back(tape.grad(*v));
    });
    LossAndGrads out;
    const double w = 1.0 / static_cast<double>(n);
    out.grads = std::move(grads[0]);
    out.loss = losses[0];
    for (std::size_t i = 1; i < n; ++i) {
      out.loss += losses[i];
      for (std::size_t p = 0; p < out.grads.size(); ++p)
        for (std::size_t e = 0; e < out.grads[p].size(); ++e) out.grads[p][e] += grads[i][p][e];
    }
    out.loss *= w;
    for (auto& g : out.grads)
      for (auto& v : g.data()) v *= w;
    return out;
  };
  return problem;
}

}  // namespace patchasd

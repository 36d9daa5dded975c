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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "patchasd/augment.hpp"
#include "patchasd/model.hpp"

namespace patchasd {

class TrainingError : public Error {
 public:
  using Error::Error;
};

// One metadata combination, e.g. {"fan", "00"} or {"fan", "00", "target"}.
using MetadataTuple = std::vector<std::string>;

// Bijection between distinct metadata tuples and class indices, ordered
// lexicographically so indices do not depend on record order.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  explicit LabelVocabulary(std::vector<MetadataTuple> labels);

  std::size_t size() const { return labels_.size(); }
  // Throws Error for tuples not in the vocabulary.
  std::size_t index_of(const MetadataTuple& tuple) const;
  const MetadataTuple& label(std::size_t index) const { return labels_.at(index); }
  const std::vector<MetadataTuple>& labels() const { return labels_; }

 private:
  std::vector<MetadataTuple> labels_;
  std::map<MetadataTuple, std::size_t> index_;
};

// Throws when a record is empty, has an empty field or a different arity.
LabelVocabulary build_vocabulary(std::span<const MetadataTuple> records);

std::string join_label(const MetadataTuple& tuple, char sep = '/');
MetadataTuple split_label(const std::string& key, char sep = '/');

struct TrainConfig {
  std::size_t total_steps = 10000;
  std::size_t batch_size = 32;   // clips per micro-batch
  std::size_t grad_accum = 8;    // micro-batches per optimizer step
  double lr = 1e-4;
  std::size_t warmup_steps = 960;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-6;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

// Linear ramp 0 -> lr over warmup_steps, then cosine decay to 0 at
// total_steps. Throws for step > total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct NamedParam {
  std::string name;
  Tensor* value;
};

// Decoupled weight decay Adam. Layer-norm and bias parameters are not decayed.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, const TrainConfig& cfg);

  // Applies one update with learning rate `lr`; grads are in param order.
  void step(std::span<const Tensor> grads, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<Tensor> m_, v_;
  std::vector<bool> decay_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

struct LossAndGrads {
  double loss = 0.0;           // mean over the micro-batch
  std::vector<Tensor> grads;   // d(loss)/d(param), param order
};

// A differentiable objective over indexed examples. `draw_seeds[i]` seeds
// any per-example randomness (augmentation) for examples[i].
struct TrainProblem {
  std::vector<NamedParam> params;
  std::size_t num_examples = 0;
  std::function<LossAndGrads(std::span<const std::size_t> examples,
                             std::span<const std::uint64_t> draw_seeds)>
      loss_and_grads;
};

struct LossRecord {
  std::size_t step;
  double lr;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> trace;
};

using StepCallback = std::function<void(const LossRecord&)>;

// Runs total_steps optimizer steps. Each step draws batch_size * grad_accum
// examples from a seeded stream of shuffled epochs, averages the micro-batch
// gradients and applies AdamW at lr_at(step). Throws TrainingError on a
// non-finite loss, naming the step.
TrainResult train(const TrainProblem& problem, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const LossRecord> trace);

// Labeled spectrogram used to fine-tune the clip embedder.
struct ClipExample {
  MelSpectrogram features;  // standardized log-mel, before augmentation
  std::size_t label = 0;
};

// Builds the ArcFace fine-tuning objective over all parameters of `params`.
// Per example: SpecAug (seeded by its draw seed) -> patchify -> embed ->
// ArcFace loss; clips of a micro-batch run on independent tapes across
// `workers` threads and are reduced in a fixed order.
TrainProblem make_arcface_problem(std::span<const ClipExample> examples, ModelParams& params,
                                  const ModelConfig& cfg, const SpecAugConfig& augment,
                                  std::size_t workers);

}  // namespace patchasd

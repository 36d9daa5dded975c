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

// Run configuration for the command-line pipeline, read from flat
// "key = value" files.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "patchasd/augment.hpp"
#include "patchasd/dsp.hpp"
#include "patchasd/metrics.hpp"
#include "patchasd/model.hpp"
#include "patchasd/synth.hpp"
#include "patchasd/trainer.hpp"

namespace patchasd {

enum class GroupPolicy {
  TypeId,          // one bank per machine type and id
  TypeDomainSoft,  // per type, min over source and target banks
  TypeSource,      // per type, source bank only
};

std::string to_string(GroupPolicy g);
GroupPolicy parse_group_policy(const std::string& s);

struct RunConfig {
  std::filesystem::path dataset_root = "data";
  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint;  // empty: <output_dir>/model.ckpt

  DatasetLayout layout;
  FrontendConfig frontend;
  SpecAugConfig specaug;
  ModelConfig model;  // num_classes comes from the label vocabulary
  TrainConfig train;
  std::vector<std::string> label_fields{"type", "id"};

  GroupPolicy group = GroupPolicy::TypeId;
  MeanMode metric_mean = MeanMode::Arithmetic;
  double pauc_p = 0.1;
  std::size_t knn_k = 1;

  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::filesystem::path checkpoint_path() const;
  void validate() const;
};

// Desk-scale defaults: ViT depth 2 / dim 64, 2000 steps of batch 8.
RunConfig desk_defaults();

// Applies one setting; throws naming the key on unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Reads "key = value" lines; '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Every setting as "key = value" lines, in a fixed order. Feeding the
// output back through apply_config_file reproduces the configuration.
std::string describe(const RunConfig& cfg);

}  // namespace patchasd

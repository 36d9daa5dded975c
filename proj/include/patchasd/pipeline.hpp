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

// End-to-end stages behind the command-line tool: synth, train, embed,
// score and eval. Each stage reads the previous stage's files.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "patchasd/backend.hpp"
#include "patchasd/config.hpp"

namespace patchasd {

using LogFn = std::function<void(const std::string&)>;

// WAV clips of one split, sorted by file name; metadata comes from names.
std::vector<ClipRecord> scan_split(const std::filesystem::path& dataset_root, const std::string& split);

MelSpectrogram load_features(const std::filesystem::path& wav, const FrontendConfig& cfg);

MetadataTuple label_tuple(const ClipRecord& r, const std::vector<std::string>& fields);

// Clip id -> embedding; ordered by clip id.
using EmbeddingSet = std::map<std::string, std::vector<double>>;

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set, const std::string& split);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

struct ScoredClip {
  std::string clip_id;
  double score = 0.0;
};

// Scores every test clip against banks built from the train embeddings
// according to `policy`. Output follows the order of `test`.
std::vector<ScoredClip> score_embeddings(const EmbeddingSet& train, const EmbeddingSet& test,
                                         GroupPolicy policy, std::size_t k = 1,
                                         std::size_t workers = 1);

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoredClip>& scores);
std::vector<ScoredClip> read_scores_csv(const std::filesystem::path& path);

// Groups scored clips by the policy's evaluation unit and computes metrics.
EvalReport evaluate_scores(const std::vector<ScoredClip>& scores, GroupPolicy policy, MeanMode mode,
                           double p);

// Stage entry points. Each logs its resolved configuration first.
std::vector<ClipRecord> cmd_synth(const RunConfig& cfg, const LogFn& log);
void cmd_train(const RunConfig& cfg, const LogFn& log);
void cmd_embed(const RunConfig& cfg, const LogFn& log);
std::vector<ScoredClip> cmd_score(const RunConfig& cfg, const LogFn& log);
EvalReport cmd_eval(const RunConfig& cfg, const LogFn& log);

// File names inside output_dir.
inline constexpr const char* kTrainEmbeddings = "embeddings_train.ckpt";
inline constexpr const char* kTestEmbeddings = "embeddings_test.ckpt";
inline constexpr const char* kScoresCsv = "scores.csv";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kLossCsv = "loss.csv";

}  // namespace patchasd

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

// ROC area metrics and challenge-style aggregation.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchasd/tensor.hpp"

namespace patchasd {

// Mann-Whitney AUC with half credit for ties. is_anomaly[i] != 0 marks an
// anomalous clip. Throws when either class is missing.
double auc(std::span<const double> scores, std::span<const int> is_anomaly);

// ROC area over FPR in [0, p], divided by p. The curve is interpolated
// linearly at FPR = p. pauc(.., 1.0) == auc(..) exactly.
double pauc(std::span<const double> scores, std::span<const int> is_anomaly, double p = 0.1);

enum class MeanMode { Arithmetic, Harmonic };

std::string to_string(MeanMode mode);
MeanMode parse_mean_mode(const std::string& name);  // "arith" | "harm"

// Harmonic mode requires every value > 0.
double aggregate(std::span<const double> values, MeanMode mode);

struct GroupScores {
  std::string group;         // e.g. "fan/00"
  std::string machine_type;  // aggregation unit for per-type summaries
  std::vector<double> scores;
  std::vector<int> is_anomaly;
};

struct GroupMetrics {
  std::string group;
  std::string machine_type;
  std::size_t n_normal = 0;
  std::size_t n_anomaly = 0;
  double auc = 0.0;
  double pauc = 0.0;
};

struct Summary {
  std::string name;
  double auc = 0.0;     // mean of AUC values
  double pauc = 0.0;    // mean of pAUC values
  double score = 0.0;   // mean over all AUC and pAUC values together
};

struct EvalReport {
  MeanMode mode = MeanMode::Arithmetic;
  double p = 0.1;
  std::vector<GroupMetrics> groups;
  std::vector<Summary> per_type;
  Summary overall;
  // Both means of the same AUC and pAUC values; harmonic is empty when
  // some value is 0.
  double overall_arithmetic = 0.0;
  std::optional<double> overall_harmonic;
};

// In harmonic mode a summary containing a zero value is 0, the limit of the
// mean; aggregate() itself rejects zeros.
EvalReport evaluate(std::span<const GroupScores> groups, MeanMode mode, double p = 0.1);

std::string report_to_json(const EvalReport& report);
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
// One row per group followed by per-type and overall rows.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace patchasd

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

// Nearest-neighbour anomaly scoring against banks of normal embeddings.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchasd/checkpoint.hpp"

namespace patchasd {

// Immutable after construction; safe to query from several threads.
class MemoryBank {
 public:
  MemoryBank() = default;

  const std::string& group() const { return group_; }
  std::size_t size() const { return vectors_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<double>& vector(std::size_t i) const { return vectors_[i]; }
  double norm(std::size_t i) const { return norms_[i]; }

 private:
  friend MemoryBank build_bank(std::vector<std::vector<double>> embeddings, std::string group);

  std::string group_;
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> vectors_;
  std::vector<double> norms_;
};

// Throws on an empty set, mixed dimensions or a zero vector.
MemoryBank build_bank(std::vector<std::vector<double>> embeddings, std::string group);

double vector_norm(std::span<const double> v);

// 1 - cos(q, b), clamped to [0, 2].
double cosine_distance(std::span<const double> q, double q_norm, std::span<const double> b,
                       double b_norm);

// Mean of the k smallest cosine distances from q to the bank; k = 1 gives
// the nearest-neighbour distance. Exhaustive search.
double score(std::span<const double> q, const MemoryBank& bank, std::size_t k = 1);

// Minimum of the scores against a source and a target bank.
double soft_score(std::span<const double> q, const MemoryBank& source, const MemoryBank& target,
                  std::size_t k = 1);

// Banks are stored as one [n x dim] tensor each, named "bank/<group>".
TensorArchive banks_to_archive(std::span<const MemoryBank> banks);
std::vector<MemoryBank> banks_from_archive(const TensorArchive& archive);

}  // namespace patchasd

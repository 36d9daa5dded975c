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

#include "patchasd/backend.hpp"

#include <algorithm>
#include <cmath>

namespace patchasd {

double vector_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_distance(std::span<const double> q, double q_norm, std::span<const double> b,
                       double b_norm) {
  double dot = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * b[i];
  return std::clamp(1.0 - dot / (q_norm * b_norm), 0.0, 2.0);
}

MemoryBank build_bank(std::vector<std::vector<double>> embeddings, std::string group) {
  if (embeddings.empty()) throw Error("memory bank '" + group + "': no embeddings");
  MemoryBank bank;
  bank.group_ = std::move(group);
  bank.dim_ = embeddings[0].size();
  if (bank.dim_ == 0) throw Error("memory bank '" + bank.group_ + "': zero-dimensional embeddings");
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != bank.dim_) {
      throw ShapeError("memory bank '" + bank.group_ + "': embedding " + std::to_string(i) +
                       " has dimension " + std::to_string(embeddings[i].size()) + ", expected " +
                       std::to_string(bank.dim_));
    }
    const double n = vector_norm(embeddings[i]);
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error("memory bank '" + bank.group_ + "': embedding " + std::to_string(i) +
                  " has zero or non-finite norm");
    }
    bank.norms_.push_back(n);
  }
  bank.vectors_ = std::move(embeddings);
  return bank;
}

double score(std::span<const double> q, const MemoryBank& bank, std::size_t k) {
  if (bank.size() == 0) throw Error("score: empty memory bank");
  if (q.size() != bank.dim()) {
    throw ShapeError("score: query dimension " + std::to_string(q.size()) + " vs bank '" +
                     bank.group() + "' dimension " + std::to_string(bank.dim()));
  }
  if (k == 0 || k > bank.size()) {
    throw Error("score: k=" + std::to_string(k) + " outside [1, " + std::to_string(bank.size()) + "]");
  }
  const double qn = vector_norm(q);
  if (!(qn > 0.0)) throw Error("score: zero-norm query");
  if (k == 1) {
    double best = 2.0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      best = std::min(best, cosine_distance(q, qn, bank.vector(i), bank.norm(i)));
    }
    return best;
  }
  std::vector<double> d(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) d[i] = cosine_distance(q, qn, bank.vector(i), bank.norm(i));
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += d[i];
  return s / static_cast<double>(k);
}

double soft_score(std::span<const double> q, const MemoryBank& source, const MemoryBank& target,
                  std::size_t k) {
  return std::min(score(q, source, k), score(q, target, k));
}

TensorArchive banks_to_archive(std::span<const MemoryBank> banks) {
  TensorArchive a;
  a.set_meta("kind", "memory-banks");
  for (const auto& b : banks) {
    Tensor t({b.size(), b.dim()});
    for (std::size_t i = 0; i < b.size(); ++i)
      std::copy(b.vector(i).begin(), b.vector(i).end(), t.data().begin() + i * b.dim());
    a.add("bank/" + b.group(), std::move(t));
  }
  return a;
}

std::vector<MemoryBank> banks_from_archive(const TensorArchive& archive) {
  std::vector<MemoryBank> out;
  for (const auto& nt : archive.tensors()) {
    if (nt.name.rfind("bank/", 0) != 0) continue;
    if (nt.tensor.rank() != 2) {
      throw CheckpointError("checkpoint: tensor '" + nt.name + "': expected rank 2, got " +
                            shape_str(nt.tensor.shape()));
    }
    std::vector<std::vector<double>> rows(nt.tensor.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto d = nt.tensor.data().subspan(i * nt.tensor.cols(), nt.tensor.cols());
      rows[i].assign(d.begin(), d.end());
    }
    out.push_back(build_bank(std::move(rows), nt.name.substr(5)));
  }
  return out;
}

}  // namespace patchasd

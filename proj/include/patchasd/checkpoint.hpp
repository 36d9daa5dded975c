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

// Named-tensor container used for model checkpoints, memory banks and
// embedding files. Layout (all integers little-endian):
//
//   8 bytes   magic "PASDTNSR"
//   u32       format version (1)
//   u64       manifest length in bytes
//   manifest  UTF-8 text, one record per line, tab separated:
//               meta    <key>   <value>
//               tensor  <name>  <f32|f64>  <d0,d1,...>  <offset>  <nbytes>
//   blobs     little-endian IEEE floats; offsets are relative to the first
//             byte after the manifest.
//
// docs/container_format.md has the full description.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patchasd/tensor.hpp"

namespace patchasd {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

enum class DType { F32, F64 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class TensorArchive {
 public:
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  // Throws CheckpointError naming the missing tensor.
  const Tensor& get(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void set_meta(const std::string& key, std::string value);
  std::optional<std::string> meta(const std::string& key) const;
  // Throws CheckpointError naming the missing key.
  const std::string& require_meta(const std::string& key) const;
  const std::map<std::string, std::string>& metadata() const { return meta_; }

  friend bool operator==(const TensorArchive& a, const TensorArchive& b);

 private:
  std::vector<NamedTensor> tensors_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> meta_;
};

// F64 round-trips every tensor bit-exactly; F32 halves the size.
void save_archive(const std::filesystem::path& path, const TensorArchive& archive,
                  DType dtype = DType::F64);
std::string serialize_archive(const TensorArchive& archive, DType dtype = DType::F64);

TensorArchive load_archive(const std::filesystem::path& path);
TensorArchive parse_archive(const std::string& bytes, const std::string& source = "<memory>");

}  // namespace patchasd

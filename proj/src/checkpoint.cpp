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

#include "patchasd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace patchasd {
namespace {

constexpr char kMagic[8] = {'P', 'A', 'S', 'D', 'T', 'N', 'S', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 8 + 4 + 8;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

void check_token(const std::string& s, const char* what) {
  if (s.find_first_of("\t\n") != std::string::npos) {
    throw CheckpointError(std::string("checkpoint: ") + what + " '" + s +
                          "' contains a tab or newline");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

void TensorArchive::add(std::string name, Tensor tensor) {
  check_token(name, "tensor name");
  if (name.empty()) throw CheckpointError("checkpoint: empty tensor name");
  if (index_.count(name)) throw CheckpointError("checkpoint: duplicate tensor '" + name + "'");
  index_.emplace(name, tensors_.size());
  tensors_.push_back({std::move(name), std::move(tensor)});
}

bool TensorArchive::contains(const std::string& name) const { return index_.count(name) > 0; }

const Tensor& TensorArchive::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw CheckpointError("checkpoint: missing tensor '" + name + "'");
  return tensors_[it->second].tensor;
}

void TensorArchive::set_meta(const std::string& key, std::string value) {
  check_token(key, "meta key");
  check_token(value, "meta value");
  meta_[key] = std::move(value);
}

std::optional<std::string> TensorArchive::meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) return std::nullopt;
  return it->second;
}

const std::string& TensorArchive::require_meta(const std::string& key) const {
  auto it = meta_.find(key);
  if (it == meta_.end()) throw CheckpointError("checkpoint: missing metadata '" + key + "'");
  return it->second;
}

bool operator==(const TensorArchive& a, const TensorArchive& b) {
  if (a.meta_ != b.meta_ || a.tensors_.size() != b.tensors_.size()) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    if (a.tensors_[i].name != b.tensors_[i].name) return false;
    if (!(a.tensors_[i].tensor == b.tensors_[i].tensor)) return false;
  }
  return true;
}

std::string serialize_archive(const TensorArchive& archive, DType dtype) {
  const std::size_t width = dtype == DType::F64 ? 8 : 4;
  std::ostringstream manifest;
  for (const auto& [k, v] : archive.metadata()) manifest << "meta\t" << k << '\t' << v << '\n';
  std::uint64_t offset = 0;
  for (const auto& nt : archive.tensors()) {
    const std::uint64_t nbytes = nt.tensor.size() * width;
    manifest << "tensor\t" << nt.name << '\t' << (dtype == DType::F64 ? "f64" : "f32") << '\t';
    for (std::size_t i = 0; i < nt.tensor.rank(); ++i) {
      if (i) manifest << ',';
      manifest << nt.tensor.dim(i);
    }
    manifest << '\t' << offset << '\t' << nbytes << '\n';
    offset += nbytes;
  }
  const std::string text = manifest.str();

  std::string out(kMagic, kMagic + 8);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& nt : archive.tensors()) {
    for (double v : nt.tensor.data()) {
      if (dtype == DType::F64) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      } else {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive, DType dtype) {
  const std::string bytes = serialize_archive(archive, dtype);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("checkpoint: write failed for " + path.string());
}

TensorArchive parse_archive(const std::string& bytes, const std::string& source) {
  const std::string where = " (" + source + ")";
  if (bytes.size() < kHeaderBytes) {
    throw CheckpointError("checkpoint: truncated header: " + std::to_string(bytes.size()) +
                          " bytes" + where);
  }
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw CheckpointError("checkpoint: bad magic" + where);
  const auto version = get_le<std::uint32_t>(bytes.data() + 8);
  if (version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version) + where);
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 12);
  if (manifest_len > bytes.size() - kHeaderBytes) {
    throw CheckpointError("checkpoint: truncated manifest (declares " +
                          std::to_string(manifest_len) + " bytes)" + where);
  }
  const std::string text = bytes.substr(kHeaderBytes, manifest_len);
  const std::size_t blob_start = kHeaderBytes + manifest_len;
  const std::size_t blob_size = bytes.size() - blob_start;

  TensorArchive archive;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const std::string& line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields[0] == "meta") {
      if (fields.size() != 3) {
        throw CheckpointError("checkpoint: malformed meta record on manifest line " +
                              std::to_string(line_no) + where);
      }
      archive.set_meta(fields[1], fields[2]);
      continue;
    }
    if (fields[0] != "tensor") {
      throw CheckpointError("checkpoint: unknown record '" + fields[0] + "' on manifest line " +
                            std::to_string(line_no) + where);
    }
    const std::string name = fields.size() > 1 ? fields[1] : "";
    auto fail = [&](const std::string& why) {
      return CheckpointError("checkpoint: tensor '" + name + "': " + why + where);
    };
    if (fields.size() != 6) throw fail("malformed manifest record");
    if (!seen.insert(name).second) throw fail("duplicate name");
    std::size_t width = 0;
    if (fields[2] == "f64") {
      width = 8;
    } else if (fields[2] == "f32") {
      width = 4;
    } else {
      throw fail("unknown dtype '" + fields[2] + "'");
    }
    Shape shape;
    if (!fields[3].empty()) {
      for (const std::string& d : split(fields[3], ',')) {
        std::uint64_t v = 0;
        if (!parse_u64(d, v)) throw fail("bad shape '" + fields[3] + "'");
        shape.push_back(v);
      }
    }
    std::uint64_t offset = 0, nbytes = 0;
    if (!parse_u64(fields[4], offset) || !parse_u64(fields[5], nbytes)) {
      throw fail("bad offset or byte count");
    }
    const std::size_t numel = shape_numel(shape);
    if (nbytes != numel * width) {
      throw fail("byte count " + std::to_string(nbytes) + " does not match shape " +
                 shape_str(shape) + " (" + std::to_string(numel * width) + " bytes)");
    }
    if (offset > blob_size || nbytes > blob_size - offset) {
      throw fail("data [" + std::to_string(offset) + ", " + std::to_string(offset + nbytes) +
                 ") runs past end of file (" + std::to_string(blob_size) + " blob bytes)");
    }
    std::vector<double> data(numel);
    const char* p = bytes.data() + blob_start + offset;
    for (std::size_t i = 0; i < numel; ++i) {
      data[i] = width == 8 ? std::bit_cast<double>(get_le<std::uint64_t>(p + 8 * i))
                           : static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(p + 4 * i)));
    }
    archive.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return archive;
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("checkpoint: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_archive(bytes, path.string());
}

}  // namespace patchasd

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

#include "patchasd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace patchasd {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw Error("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw Error("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define PATCHASD_SIZE(KEY, FIELD)                                                                 \
  Entry {                                                                                         \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_uint(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                \
  }
#define PATCHASD_REAL(KEY, FIELD)                                                                   \
  Entry {                                                                                           \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                             \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"dataset_root", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_root = v; },
       [](const RunConfig& c) { return c.dataset_root.string(); }},
      {"output_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir.string(); }},
      {"checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; },
       [](const RunConfig& c) { return c.checkpoint.string(); }},
      PATCHASD_SIZE("seed", seed),
      PATCHASD_SIZE("workers", workers),
      {"group", [](RunConfig& c, const std::string&, const std::string& v) { c.group = parse_group_policy(v); },
       [](const RunConfig& c) { return to_string(c.group); }},
      {"metric_mean", [](RunConfig& c, const std::string&, const std::string& v) { c.metric_mean = parse_mean_mode(v); },
       [](const RunConfig& c) { return to_string(c.metric_mean); }},
      PATCHASD_REAL("pauc_p", pauc_p),
      PATCHASD_SIZE("knn_k", knn_k),
      {"labels",
       [](RunConfig& c, const std::string& key, const std::string& v) {
         auto fields = to_list(v);
         if (fields.empty()) throw Error("config: " + key + ": no label fields");
         for (const auto& f : fields) {
           if (f != "type" && f != "id" && f != "domain") {
             throw Error("config: " + key + ": unknown label field '" + f + "' (type, id or domain)");
           }
         }
         c.label_fields = std::move(fields);
       },
       [](const RunConfig& c) { return join(c.label_fields); }},

      {"layout.machine_types", [](RunConfig& c, const std::string&, const std::string& v) { c.layout.machine_types = to_list(v); },
       [](const RunConfig& c) { return join(c.layout.machine_types); }},
      PATCHASD_SIZE("layout.ids_per_type", layout.ids_per_type),
      PATCHASD_SIZE("layout.train_per_entity", layout.train_per_entity),
      PATCHASD_SIZE("layout.test_per_entity", layout.test_per_entity),
      PATCHASD_REAL("layout.duration_s", layout.duration_s),
      PATCHASD_REAL("layout.train_target_fraction", layout.train_target_fraction),
      PATCHASD_REAL("layout.test_target_fraction", layout.test_target_fraction),
      PATCHASD_REAL("layout.test_anomaly_fraction", layout.test_anomaly_fraction),
      PATCHASD_REAL("layout.strength.transient_click", layout.strengths.transient_click),
      PATCHASD_REAL("layout.strength.harmonic_shift", layout.strengths.harmonic_shift),
      PATCHASD_REAL("layout.strength.amplitude_modulation", layout.strengths.amplitude_modulation),
      PATCHASD_REAL("layout.strength.band_noise", layout.strengths.band_noise),
      {"layout.anomaly_kinds",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.layout.kinds.clear();
         for (const auto& k : to_list(v)) c.layout.kinds.push_back(parse_anomaly_kind(k));
       },
       [](const RunConfig& c) {
         std::vector<std::string> names;
         for (auto k : c.layout.kinds) names.push_back(to_string(k));
         return join(names);
       }},

      PATCHASD_SIZE("frontend.n_mels", frontend.n_mels),
      PATCHASD_SIZE("frontend.n_fft", frontend.n_fft),
      PATCHASD_REAL("frontend.f_min", frontend.f_min),
      PATCHASD_REAL("frontend.f_max", frontend.f_max),
      {"frontend.standardize", [](RunConfig& c, const std::string& k, const std::string& v) { c.frontend.standardize = to_bool(k, v); },
       [](const RunConfig& c) { return std::string(c.frontend.standardize ? "true" : "false"); }},

      PATCHASD_SIZE("specaug.freq_mask_param", specaug.freq_mask_param),
      PATCHASD_SIZE("specaug.time_mask_param", specaug.time_mask_param),
      PATCHASD_SIZE("specaug.n_freq_masks", specaug.n_freq_masks),
      PATCHASD_SIZE("specaug.n_time_masks", specaug.n_time_masks),

      PATCHASD_SIZE("vit.depth", model.vit.depth),
      PATCHASD_SIZE("vit.dim", model.vit.dim),
      PATCHASD_SIZE("vit.heads", model.vit.heads),
      PATCHASD_REAL("vit.mlp_ratio", model.vit.mlp_ratio),
      PATCHASD_SIZE("vit.max_freq_rows", model.vit.max_freq_rows),
      PATCHASD_SIZE("vit.max_time_cols", model.vit.max_time_cols),
      PATCHASD_SIZE("model.embed_dim", model.embed_dim),
      PATCHASD_REAL("arcface.scale", model.arcface.scale),
      PATCHASD_REAL("arcface.margin", model.arcface.margin),

      PATCHASD_SIZE("train.steps", train.total_steps),
      PATCHASD_SIZE("train.batch_size", train.batch_size),
      PATCHASD_SIZE("train.grad_accum", train.grad_accum),
      PATCHASD_REAL("train.lr", train.lr),
      PATCHASD_SIZE("train.warmup_steps", train.warmup_steps),
      PATCHASD_REAL("train.weight_decay", train.weight_decay),
  };
  return table;
}

#undef PATCHASD_SIZE
#undef PATCHASD_REAL

}  // namespace

std::string to_string(GroupPolicy g) {
  switch (g) {
    case GroupPolicy::TypeId: return "type-id";
    case GroupPolicy::TypeDomainSoft: return "type-domain-soft";
    case GroupPolicy::TypeSource: return "type-source";
  }
  return "?";
}

GroupPolicy parse_group_policy(const std::string& s) {
  if (s == "type-id") return GroupPolicy::TypeId;
  if (s == "type-domain-soft") return GroupPolicy::TypeDomainSoft;
  if (s == "type-source") return GroupPolicy::TypeSource;
  throw Error("unknown group policy '" + s + "' (expected type-id, type-domain-soft or type-source)");
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "model.ckpt" : checkpoint;
}

void RunConfig::validate() const {
  layout.validate();
  model.vit.validate();
  model.arcface.validate();
  train.validate();
  if (label_fields.empty()) throw Error("config: labels must name at least one field");
  for (const auto& f : label_fields) {
    if (f != "type" && f != "id" && f != "domain") {
      throw Error("config: unknown label field '" + f + "' (expected type, id or domain)");
    }
  }
  if (!(pauc_p > 0.0 && pauc_p <= 1.0)) throw Error("config: pauc_p must be in (0, 1]");
  if (knn_k == 0) throw Error("config: knn_k must be >= 1");
  if (workers == 0) throw Error("config: workers must be >= 1");
}

RunConfig desk_defaults() {
  RunConfig c;
  c.model.vit.depth = 2;
  c.model.vit.dim = 64;
  c.model.vit.heads = 2;
  c.train.total_steps = 2000;
  c.train.batch_size = 8;
  c.train.grad_accum = 1;
  c.train.lr = 1e-3;
  c.train.warmup_steps = 100;
  return c;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(cfg, key, value);
      return;
    }
  }
  throw Error("config: unknown key '" + key + "'");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string describe(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace patchasd

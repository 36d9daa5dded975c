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

#include "patchasd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "patchasd/parallel.hpp"
#include "patchasd/wav.hpp"

namespace patchasd {
namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void log_config(const std::string& stage, const RunConfig& cfg, const LogFn& log) {
  if (!log) return;
  log("[" + stage + "] resolved config:");
  std::istringstream lines(describe(cfg));
  for (std::string line; std::getline(lines, line);) log("  " + line);
}

void require_file(const fs::path& path, const std::string& what, const std::string& hint) {
  if (!fs::exists(path)) throw Error(what + " not found: " + path.string() + " (" + hint + ")");
}

std::vector<MelSpectrogram> load_all(const fs::path& root, const std::vector<ClipRecord>& records,
                                     const FrontendConfig& fe, std::size_t workers) {
  std::vector<MelSpectrogram> out(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    out[i] = load_features(root / records[i].split / clip_filename(records[i]), fe);
  });
  return out;
}

ClipRecord record_of(const std::string& clip_id) { return parse_clip_filename(clip_id + ".wav"); }

std::string eval_group(const ClipRecord& r, GroupPolicy policy) {
  return policy == GroupPolicy::TypeId ? r.entity_key() : r.machine_type;
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(sep);
    out += v[i];
  }
  return out;
}

}  // namespace

std::vector<ClipRecord> scan_split(const fs::path& dataset_root, const std::string& split) {
  const fs::path dir = dataset_root / split;
  if (!fs::is_directory(dir)) {
    throw Error("dataset split not found: " + dir.string() + " (run 'patchasd synth' or point dataset_root at a dataset)");
  }
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<ClipRecord> out;
  for (const auto& n : names) {
    ClipRecord r = parse_clip_filename(n);
    r.split = split;
    out.push_back(std::move(r));
  }
  return out;
}

MelSpectrogram load_features(const fs::path& wav, const FrontendConfig& cfg) {
  return extract_features(read_wav(wav, cfg.sample_rate), cfg);
}

MetadataTuple label_tuple(const ClipRecord& r, const std::vector<std::string>& fields) {
  MetadataTuple t;
  for (const auto& f : fields) {
    if (f == "type") {
      t.push_back(r.machine_type);
    } else if (f == "id") {
      t.push_back(r.machine_id);
    } else if (f == "domain") {
      t.push_back(to_string(r.domain));
    } else {
      throw Error("unknown label field '" + f + "'");
    }
  }
  return t;
}

void save_embeddings(const fs::path& path, const EmbeddingSet& set, const std::string& split) {
  TensorArchive a;
  a.set_meta("kind", "embeddings");
  a.set_meta("split", split);
  for (const auto& [id, v] : set) a.add(id, Tensor::vector(v));
  save_archive(path, a);
}

EmbeddingSet load_embeddings(const fs::path& path) {
  const TensorArchive a = load_archive(path);
  EmbeddingSet out;
  for (const auto& nt : a.tensors()) {
    out[nt.name] = std::vector<double>(nt.tensor.data().begin(), nt.tensor.data().end());
  }
  return out;
}

namespace {

struct Banks {
  std::map<std::string, MemoryBank> primary;  // source bank under soft scoring
  std::map<std::string, MemoryBank> target;
};

Banks build_banks(const EmbeddingSet& train, GroupPolicy policy) {
  std::map<std::string, std::vector<std::vector<double>>> primary, target;
  for (const auto& [id, v] : train) {
    const ClipRecord r = record_of(id);
    switch (policy) {
      case GroupPolicy::TypeId:
        primary[r.entity_key()].push_back(v);
        break;
      case GroupPolicy::TypeSource:
        if (r.domain == Domain::Source) primary[r.machine_type].push_back(v);
        break;
      case GroupPolicy::TypeDomainSoft:
        (r.domain == Domain::Source ? primary : target)[r.machine_type].push_back(v);
        break;
    }
  }
  Banks b;
  for (auto& [key, vs] : primary) b.primary.emplace(key, build_bank(std::move(vs), key));
  for (auto& [key, vs] : target) b.target.emplace(key, build_bank(std::move(vs), key + "/target"));
  return b;
}

}  // namespace

std::vector<ScoredClip> score_embeddings(const EmbeddingSet& train, const EmbeddingSet& test,
                                         GroupPolicy policy, std::size_t k, std::size_t workers) {
  const Banks banks = build_banks(train, policy);
  std::vector<const std::pair<const std::string, std::vector<double>>*> queries;
  for (const auto& q : test) queries.push_back(&q);
  std::vector<ScoredClip> out(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto& [id, q] = *queries[i];
    const ClipRecord r = record_of(id);
    const std::string key = policy == GroupPolicy::TypeId ? r.entity_key() : r.machine_type;
    const auto src = banks.primary.find(key);
    if (src == banks.primary.end()) {
      throw Error("score: no training embeddings for group '" + key + "' (clip " + id + ")");
    }
    double s = 0.0;
    if (policy == GroupPolicy::TypeDomainSoft) {
      const auto tgt = banks.target.find(key);
      if (tgt == banks.target.end()) {
        throw Error("score: soft scoring needs target-domain training clips for '" + key + "'");
      }
      s = soft_score(q, src->second, tgt->second, k);
    } else {
      s = score(q, src->second, k);
    }
    out[i] = {id, s};
  });
  return out;
}

void write_scores_csv(const fs::path& path, const std::vector<ScoredClip>& scores) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "clip_id,score\n";
  for (const auto& s : scores) f << s.clip_id << ',' << fmt(s.score) << '\n';
}

std::vector<ScoredClip> read_scores_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read scores file " + path.string());
  std::string line;
  std::getline(f, line);
  if (line.rfind("clip_id,score", 0) != 0) {
    throw Error(path.string() + ": expected header 'clip_id,score'");
  }
  std::vector<ScoredClip> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(path.string() + ":" + std::to_string(lineno) + ": missing score");
    try {
      std::size_t used = 0;
      const std::string num = line.substr(comma + 1);
      const double v = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument("trailing characters");
      out.push_back({line.substr(0, comma), v});
    } catch (const std::exception&) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": bad score '" + line.substr(comma + 1) + "'");
    }
  }
  return out;
}

EvalReport evaluate_scores(const std::vector<ScoredClip>& scores, GroupPolicy policy, MeanMode mode,
                           double p) {
  std::map<std::string, GroupScores> groups;
  for (const auto& s : scores) {
    const ClipRecord r = record_of(s.clip_id);
    const std::string key = eval_group(r, policy);
    GroupScores& g = groups[key];
    g.group = key;
    g.machine_type = r.machine_type;
    g.scores.push_back(s.score);
    g.is_anomaly.push_back(r.is_anomaly ? 1 : 0);
  }
  std::vector<GroupScores> list;
  for (auto& [key, g] : groups) list.push_back(std::move(g));
  return evaluate(list, mode, p);
}

std::vector<ClipRecord> cmd_synth(const RunConfig& cfg, const LogFn& log) {
  cfg.validate();
  log_config("synth", cfg, log);
  if (fs::exists(cfg.dataset_root / "metadata.csv")) {
    // Regenerating over an earlier synthetic dataset: drop its clips first.
    fs::remove_all(cfg.dataset_root / "train");
    fs::remove_all(cfg.dataset_root / "test");
  }
  auto records = generate_dataset(cfg.dataset_root, cfg.layout, cfg.seed, cfg.workers);
  if (log) log("[synth] wrote " + std::to_string(records.size()) + " clips to " + cfg.dataset_root.string());
  return records;
}

void cmd_train(const RunConfig& cfg, const LogFn& log) {
  cfg.validate();
  log_config("train", cfg, log);
  const auto records = scan_split(cfg.dataset_root, "train");
  if (records.empty()) throw Error("no training clips in " + (cfg.dataset_root / "train").string());
  const auto features = load_all(cfg.dataset_root, records, cfg.frontend, cfg.workers);

  std::vector<MetadataTuple> tuples;
  for (const auto& r : records) tuples.push_back(label_tuple(r, cfg.label_fields));
  const LabelVocabulary vocab = build_vocabulary(tuples);
  if (vocab.size() < 2) {
    throw Error("training needs at least 2 label classes, found " + std::to_string(vocab.size()) +
                " for labels '" + join(cfg.label_fields, ',') + "'");
  }
  std::vector<ClipExample> examples(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    examples[i] = {features[i], vocab.index_of(tuples[i])};
  }

  ModelConfig mc = cfg.model;
  mc.num_classes = vocab.size();
  Rng rng(derive_seed(cfg.seed, {0x696e6974ULL}));
  ModelParams params = init_model(mc, rng);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.workers = cfg.workers;
  if (log) {
    log("[train] " + std::to_string(records.size()) + " clips, " + std::to_string(vocab.size()) + " classes");
  }
  const TrainProblem problem = make_arcface_problem(examples, params, mc, cfg.specaug, cfg.workers);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult result = train(problem, tc, [&](const LossRecord& r) {
    if (!log) return;
    if (r.step == 1 || r.step % 50 == 0 || r.step == tc.total_steps) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      char buf[128];
      std::snprintf(buf, sizeof buf, "[train] step %zu/%zu lr %.3g loss %.5f (%.0f s)", r.step,
                    tc.total_steps, r.lr, r.loss, secs);
      log(buf);
    }
  });

  fs::create_directories(cfg.output_dir);
  TensorArchive archive = model_to_archive(mc, params);
  archive.set_meta("labels.fields", join(cfg.label_fields, ','));
  std::vector<std::string> names;
  for (const auto& t : vocab.labels()) names.push_back(join_label(t));
  archive.set_meta("labels.vocab", join(names, ';'));
  const fs::path ckpt = cfg.checkpoint_path();
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_archive(ckpt, archive);
  write_loss_csv(cfg.output_dir / kLossCsv, result.trace);
  if (log) log("[train] wrote " + ckpt.string());
}

void cmd_embed(const RunConfig& cfg, const LogFn& log) {
  cfg.validate();
  log_config("embed", cfg, log);
  const fs::path ckpt = cfg.checkpoint_path();
  require_file(ckpt, "checkpoint", "run 'patchasd train' first");
  const auto [mc, params] = model_from_archive(load_archive(ckpt));
  fs::create_directories(cfg.output_dir);
  for (const std::string split : {"train", "test"}) {
    const auto records = scan_split(cfg.dataset_root, split);
    std::vector<std::vector<double>> vecs(records.size());
    parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
      const auto& r = records[i];
      const MelSpectrogram s = load_features(cfg.dataset_root / split / clip_filename(r), cfg.frontend);
      const Tensor e = embed(params, mc, patchify(s, mc.vit.patch));
      vecs[i].assign(e.data().begin(), e.data().end());
    });
    EmbeddingSet set;
    for (std::size_t i = 0; i < records.size(); ++i) set[records[i].clip_id()] = std::move(vecs[i]);
    const fs::path out = cfg.output_dir / (split == "train" ? kTrainEmbeddings : kTestEmbeddings);
    save_embeddings(out, set, split);
    if (log) log("[embed] wrote " + std::to_string(set.size()) + " embeddings to " + out.string());
  }
}

std::vector<ScoredClip> cmd_score(const RunConfig& cfg, const LogFn& log) {
  cfg.validate();
  log_config("score", cfg, log);
  const fs::path train_path = cfg.output_dir / kTrainEmbeddings;
  const fs::path test_path = cfg.output_dir / kTestEmbeddings;
  require_file(train_path, "train embeddings", "run 'patchasd embed' first");
  require_file(test_path, "test embeddings", "run 'patchasd embed' first");
  const EmbeddingSet train = load_embeddings(train_path);
  const EmbeddingSet test = load_embeddings(test_path);

  const Banks banks = build_banks(train, cfg.group);
  std::vector<MemoryBank> all;
  for (const auto& [k, b] : banks.primary) all.push_back(b);
  for (const auto& [k, b] : banks.target) all.push_back(b);
  TensorArchive bank_archive = banks_to_archive(all);
  bank_archive.set_meta("group", to_string(cfg.group));
  save_archive(cfg.output_dir / "banks.ckpt", bank_archive);

  auto scores = score_embeddings(train, test, cfg.group, cfg.knn_k, cfg.workers);
  write_scores_csv(cfg.output_dir / kScoresCsv, scores);
  if (log) log("[score] wrote " + std::to_string(scores.size()) + " scores to " + (cfg.output_dir / kScoresCsv).string());
  return scores;
}

EvalReport cmd_eval(const RunConfig& cfg, const LogFn& log) {
  cfg.validate();
  log_config("eval", cfg, log);
  const fs::path scores_path = cfg.output_dir / kScoresCsv;
  require_file(scores_path, "scores file", "run 'patchasd score' first");
  const EvalReport report = evaluate_scores(read_scores_csv(scores_path), cfg.group, cfg.metric_mean, cfg.pauc_p);
  write_report_json(cfg.output_dir / kReportJson, report);
  write_report_csv(cfg.output_dir / kReportCsv, report);
  if (log) {
    for (const auto& g : report.groups) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "[eval] %-16s AUC %.4f  pAUC %.4f", g.group.c_str(), g.auc, g.pauc);
      log(buf);
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "[eval] overall (%s) AUC %.4f  pAUC %.4f  score %.4f",
                  to_string(report.mode).c_str(), report.overall.auc, report.overall.pauc, report.overall.score);
    log(buf);
  }
  return report;
}

}  // namespace patchasd

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

#include "patchasd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

namespace patchasd {
namespace {

struct RocPoint {
  std::uint64_t fp = 0;
  std::uint64_t tp = 0;
};

// ROC vertices in count units, one per distinct score, starting at (0, 0).
std::vector<RocPoint> roc_counts(std::span<const double> scores, std::span<const int> is_anomaly,
                                 std::uint64_t& n_normal, std::uint64_t& n_anomaly) {
  if (scores.size() != is_anomaly.size()) {
    throw ShapeError("roc: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(is_anomaly.size()) + " labels");
  }
  n_normal = n_anomaly = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error("roc: score " + std::to_string(i) + " is not finite");
    (is_anomaly[i] ? n_anomaly : n_normal)++;
  }
  if (n_normal == 0 || n_anomaly == 0) {
    throw Error("roc: need at least one normal and one anomalous clip (got " +
                std::to_string(n_normal) + " normal, " + std::to_string(n_anomaly) + " anomalous)");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> pts{{0, 0}};
  RocPoint cur;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (is_anomaly[order[i]] ? cur.tp : cur.fp)++;
    if (i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]]) pts.push_back(cur);
  }
  return pts;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> is_anomaly) {
  std::uint64_t nn = 0, na = 0;
  const auto pts = roc_counts(scores, is_anomaly, nn, na);
  // Twice the trapezoid area in count units; exact in integers.
  std::uint64_t twice = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    twice += (pts[i].fp - pts[i - 1].fp) * (pts[i].tp + pts[i - 1].tp);
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(nn) * static_cast<double>(na));
}

double pauc(std::span<const double> scores, std::span<const int> is_anomaly, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error("pauc: p must be in (0, 1], got " + std::to_string(p));
  std::uint64_t nn = 0, na = 0;
  const auto pts = roc_counts(scores, is_anomaly, nn, na);
  const double limit = p * static_cast<double>(nn);
  std::uint64_t twice = 0;
  double partial = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const RocPoint a = pts[i - 1], b = pts[i];
    if (static_cast<double>(b.fp) <= limit) {
      twice += (b.fp - a.fp) * (b.tp + a.tp);
      continue;
    }
    if (static_cast<double>(a.fp) < limit) {
      const double w = limit - static_cast<double>(a.fp);
      const double tp_at = static_cast<double>(a.tp) +
                           static_cast<double>(b.tp - a.tp) * w / static_cast<double>(b.fp - a.fp);
      partial = w * (static_cast<double>(a.tp) + tp_at);
    }
    break;
  }
  const double area = static_cast<double>(twice) + partial;
  return std::min(1.0, area / (2.0 * static_cast<double>(na) * limit));
}

std::string to_string(MeanMode mode) { return mode == MeanMode::Arithmetic ? "arith" : "harm"; }

MeanMode parse_mean_mode(const std::string& name) {
  if (name == "arith" || name == "arithmetic") return MeanMode::Arithmetic;
  if (name == "harm" || name == "harmonic") return MeanMode::Harmonic;
  throw Error("unknown metric mean '" + name + "' (expected arith or harm)");
}

double aggregate(std::span<const double> values, MeanMode mode) {
  if (values.empty()) throw Error("aggregate: no values");
  double s = 0.0;
  if (mode == MeanMode::Arithmetic) {
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  for (double v : values) {
    if (!(v > 0.0)) throw Error("aggregate: harmonic mean needs positive values, got " + std::to_string(v));
    s += 1.0 / v;
  }
  return static_cast<double>(values.size()) / s;
}

namespace {

// Reports extend the harmonic mean to zero values by its limit, 0, so one
// group with pAUC 0 does not abort a whole evaluation.
double report_mean(std::span<const double> values, MeanMode mode) {
  if (mode == MeanMode::Harmonic && std::any_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) {
    return 0.0;
  }
  return aggregate(values, mode);
}

Summary summarize(std::string name, std::span<const GroupMetrics* const> groups, MeanMode mode) {
  std::vector<double> aucs, paucs, both;
  for (const auto* g : groups) {
    aucs.push_back(g->auc);
    paucs.push_back(g->pauc);
  }
  both = aucs;
  both.insert(both.end(), paucs.begin(), paucs.end());
  return {std::move(name), report_mean(aucs, mode), report_mean(paucs, mode), report_mean(both, mode)};
}

}  // namespace

EvalReport evaluate(std::span<const GroupScores> groups, MeanMode mode, double p) {
  if (groups.empty()) throw Error("evaluate: no groups");
  EvalReport r;
  r.mode = mode;
  r.p = p;
  r.groups.resize(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& g = groups[i];
    auto& m = r.groups[i];
    m.group = g.group;
    m.machine_type = g.machine_type;
    for (int a : g.is_anomaly) (a ? m.n_anomaly : m.n_normal)++;
    try {
      m.auc = auc(g.scores, g.is_anomaly);
      m.pauc = pauc(g.scores, g.is_anomaly, p);
    } catch (const Error& e) {
      throw Error("evaluate: group '" + g.group + "': " + e.what());
    }
  }
  std::map<std::string, std::vector<const GroupMetrics*>> by_type;
  std::vector<const GroupMetrics*> all;
  for (const auto& m : r.groups) {
    by_type[m.machine_type].push_back(&m);
    all.push_back(&m);
  }
  for (const auto& [type, members] : by_type) r.per_type.push_back(summarize(type, members, mode));
  r.overall = summarize("overall", all, mode);

  std::vector<double> values;
  for (const auto& m : r.groups) values.push_back(m.auc);
  for (const auto& m : r.groups) values.push_back(m.pauc);
  r.overall_arithmetic = aggregate(values, MeanMode::Arithmetic);
  if (std::all_of(values.begin(), values.end(), [](double v) { return v > 0.0; })) {
    r.overall_harmonic = aggregate(values, MeanMode::Harmonic);
  }
  return r;
}

std::string report_to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["mean"] = to_string(r.mode);
  j["pauc_p"] = r.p;
  j["groups"] = ordered_json::array();
  for (const auto& g : r.groups) {
    j["groups"].push_back({{"group", g.group},
                           {"machine_type", g.machine_type},
                           {"n_normal", g.n_normal},
                           {"n_anomaly", g.n_anomaly},
                           {"auc", g.auc},
                           {"pauc", g.pauc}});
  }
  auto summary = [](const Summary& s) {
    return ordered_json{{"name", s.name}, {"auc", s.auc}, {"pauc", s.pauc}, {"score", s.score}};
  };
  j["per_type"] = ordered_json::array();
  for (const auto& s : r.per_type) j["per_type"].push_back(summary(s));
  j["overall"] = summary(r.overall);
  j["overall_arithmetic"] = r.overall_arithmetic;
  j["overall_harmonic"] = r.overall_harmonic ? ordered_json(*r.overall_harmonic) : ordered_json(nullptr);
  return j.dump(2) + "\n";
}

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << report_to_json(report);
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.precision(17);
  f << "level,name,auc,pauc,score\n";
  for (const auto& g : r.groups) f << "group," << g.group << ',' << g.auc << ',' << g.pauc << ",\n";
  for (const auto& s : r.per_type)
    f << "type," << s.name << ',' << s.auc << ',' << s.pauc << ',' << s.score << '\n';
  f << "overall," << r.overall.name << ',' << r.overall.auc << ',' << r.overall.pauc << ','
    << r.overall.score << '\n';
}

}  // namespace patchasd

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

// patchasd: synth, train, embed, score and eval stages of the anomalous
// sound detection pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "patchasd/parallel.hpp"
#include "patchasd/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> group;
  std::optional<std::string> metric_mean;
  std::optional<double> pauc_p;
  std::optional<std::size_t> workers;
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::vector<std::string> settings;
};

patchasd::RunConfig resolve(const Overrides& o) {
  patchasd::RunConfig cfg = patchasd::desk_defaults();
  cfg.workers = patchasd::default_workers();
  if (!o.config.empty()) patchasd::apply_config_file(cfg, o.config);
  for (const auto& kv : o.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw patchasd::Error("--set expects key=value, got '" + kv + "'");
    patchasd::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.group) cfg.group = patchasd::parse_group_policy(*o.group);
  if (o.metric_mean) cfg.metric_mean = patchasd::parse_mean_mode(*o.metric_mean);
  if (o.pauc_p) cfg.pauc_p = *o.pauc_p;
  if (o.workers) cfg.workers = *o.workers;
  if (o.dataset) cfg.dataset_root = *o.dataset;
  if (o.out) cfg.output_dir = *o.out;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& s) {
  std::fputs(s.c_str(), stderr);
  std::fputc('\n', stderr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchasd: patch-level anomalous sound detection pipeline"};
  app.require_subcommand(1);
  Overrides o;

  app.add_option("--config", o.config, "Config file with 'key = value' lines")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--group", o.group, "Bank grouping: type-id, type-domain-soft or type-source");
  app.add_option("--metric-mean", o.metric_mean, "Aggregate mean: arith or harm");
  app.add_option("--pauc-p", o.pauc_p, "pAUC false-positive-rate limit (default 0.1)");
  app.add_option("--workers", o.workers, "Worker threads (default: hardware threads)");
  app.add_option("--dataset", o.dataset, "Dataset root directory");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--set", o.settings, "Override one config key, key=value (repeatable)");
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "Fine-tune the model and write a checkpoint");
  auto* embed = app.add_subcommand("embed", "Embed train and test clips");
  auto* score = app.add_subcommand("score", "Score test clips against memory banks");
  auto* eval = app.add_subcommand("eval", "Compute AUC/pAUC and write the report");
  auto* run = app.add_subcommand("run", "Run synth, train, embed, score and eval in order");
  auto* show = app.add_subcommand("config", "Print the resolved configuration");
  app.fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const patchasd::RunConfig cfg = resolve(o);
    const patchasd::LogFn log = log_line;
    if (*show) {
      std::cout << patchasd::describe(cfg);
    } else if (*synth) {
      patchasd::cmd_synth(cfg, log);
    } else if (*train) {
      patchasd::cmd_train(cfg, log);
    } else if (*embed) {
      patchasd::cmd_embed(cfg, log);
    } else if (*score) {
      patchasd::cmd_score(cfg, log);
    } else if (*eval) {
      patchasd::cmd_eval(cfg, log);
    } else if (*run) {
      patchasd::cmd_synth(cfg, log);
      patchasd::cmd_train(cfg, log);
      patchasd::cmd_embed(cfg, log);
      patchasd::cmd_score(cfg, log);
      patchasd::cmd_eval(cfg, log);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "patchasd: error: %s\n", e.what());
    return 1;
  }
  return 0;
}

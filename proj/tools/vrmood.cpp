// Copyright 2026 The vrmood Authors.
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


// vrmood command-line tool.
//
//   vrmood generate      --config cfg.json [--seed N] [--out DIR]
//   vrmood train         --config cfg.json [--mode erm|vrm]
//   vrmood evaluate      --config cfg.json [--checkpoint F] [--detectors a,b] [--csv]
//   vrmood compare       --config cfg.json [--csv]
//   vrmood ablate-noise  --config cfg.json [--csv]
//   vrmood profile       --config cfg.json [--checkpoint F] [--schemes a,b] [--csv]
//
// Exit status: 0 success, 2 configuration error, 1 any other failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vrmood/experiment.hpp"

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool csv = false;
  std::optional<std::string> mode;
  std::string checkpoint;
  std::vector<std::string> detectors;
  std::vector<std::string> schemes;
};

vrmood::ExperimentConfig resolve(const Options& o) {
  vrmood::ExperimentConfig cfg = o.config_path.empty() ? vrmood::ExperimentConfig{} : vrmood::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.mode) cfg.mode = *o.mode;
  if (!o.detectors.empty()) cfg.detectors = o.detectors;
  if (!o.schemes.empty()) cfg.schemes = o.schemes;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "flat JSON experiment config (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "run seed, overrides the config");
  cmd->add_option("--out", o.out, "output directory, overrides the config");
  cmd->add_flag("--csv", o.csv, "print CSV instead of a table");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight out-of-distribution detection with vicinal risk minimization"};
  app.require_subcommand(1);
  Options o;

  auto* generate = app.add_subcommand("generate", "write train/val/test datasets and a stats sidecar");
  add_common(generate, o);
  auto* train = app.add_subcommand("train", "train a classifier on generated data");
  add_common(train, o);
  train->add_option("--mode", o.mode, "erm or vrm")->check(CLI::IsMember({"erm", "vrm"}));
  auto* evaluate = app.add_subcommand("evaluate", "score detectors against OoD sources");
  add_common(evaluate, o);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate (default: OUT/model.vood)");
  evaluate->add_option("--detectors", o.detectors, "msp, aux, odin, mahalanobis")->delimiter(',');
  auto* compare = app.add_subcommand("compare", "paired ERM/VRM runs over n_seeds seeds");
  add_common(compare, o);
  auto* ablate = app.add_subcommand("ablate-noise", "VRM with each configured noise kind");
  add_common(ablate, o);
  auto* prof = app.add_subcommand("profile", "inference cost per detection scheme");
  add_common(prof, o);
  prof->add_option("--checkpoint", o.checkpoint, "checkpoint to profile (default: OUT/model.vood)");
  prof->add_option("--schemes", o.schemes, "base, msp, aux, odin, mahalanobis")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const vrmood::ExperimentConfig cfg = resolve(o);
    if (generate->parsed()) {
      const auto dir = vrmood::cmd_generate(cfg);
      std::cout << "wrote datasets to " << dir.string() << "\n";
    } else if (train->parsed()) {
      const auto r = vrmood::cmd_train(cfg);
      std::cout << "best epoch " << r.best.epoch << ", val accuracy " << r.best.val_accuracy << "\n";
    } else if (evaluate->parsed()) {
      const auto r = vrmood::cmd_evaluate(cfg, o.checkpoint);
      std::cout << (o.csv ? vrmood::results_csv(r) : vrmood::results_table(r));
    } else if (compare->parsed()) {
      const auto r = vrmood::cmd_compare(cfg);
      std::cout << vrmood::compare_csv(r);
    } else if (ablate->parsed()) {
      const auto r = vrmood::cmd_ablate_noise(cfg);
      std::cout << vrmood::ablation_csv(r);
    } else if (prof->parsed()) {
      const auto r = vrmood::cmd_profile(cfg, o.checkpoint, o.csv);
      if (o.csv) {
        vrmood::write_cost_csv(std::cout, r);
      } else {
        vrmood::write_cost_table(std::cout, r);
      }
    }
  } catch (const vrmood::ConfigError& e) {
    std::cerr << "vrmood: configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "vrmood: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

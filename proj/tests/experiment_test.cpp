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


#include <filesystem>
#include <set>
#include <string>

#include <gtest/gtest.h>

#include "vrmood/experiment.hpp"

namespace vrmood {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small_config(const std::string& name) {
  ExperimentConfig c;
  c.n_per_class = 40;
  c.hidden = {16};
  c.epochs = 4;
  c.eval_noise_count = 60;
  c.unseen_n = 60;
  c.n_seeds = 1;
  c.out_dir = (fs::temp_directory_path() / ("vrmood_experiment_test_" + name)).string();
  fs::remove_all(c.out_dir);
  return c;
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const ExperimentConfig c;
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_EQ(parse_config(to_json(c).dump()), c);
}

TEST(Config, EditedValuesRoundTrip) {
  ExperimentConfig c;
  c.dataset = "rings";
  c.radii = {0.5, 1.25, 3.0};
  c.hidden = {7, 3};
  c.lr0 = 0.1 / 3.0;
  c.lambda_dist = "beta";
  c.lambda_param = 0.4;
  c.seed = 0xFFFFFFFFFFFFFFF1ULL;
  c.detectors = {"odin"};
  EXPECT_EQ(parse_config(to_json(c).dump()), c);
}

TEST(Config, MissingKeysTakeDefaults) {
  const auto c = parse_config(R"({"epochs": 3})");
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.hidden, ExperimentConfig{}.hidden);
}

TEST(Config, UnknownKeyAndBadTypesRejected) {
  EXPECT_THROW(parse_config(R"({"epochz": 3})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"epochs": "three"})"), ConfigError);
  EXPECT_THROW(parse_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
}

TEST(Config, ValidationRejectsBadValues) {
  auto bad = [](auto edit) {
    ExperimentConfig c;
    edit(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.dataset = "moons"; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.mode = "sgd"; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.detectors = {"energy"}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.eval_sources = {"svhn"}; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.holdout_class = 9; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.lambda_dist = "triangle"; }).validate(), ConfigError);
  EXPECT_THROW(bad([](auto& c) { c.dataset = "idx"; }).validate(), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig{}.validate());
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  ExperimentConfig a, b;
  b.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(MakeData, DeterministicAndPartitioned) {
  const auto cfg = small_config("partition");
  const auto a = make_data(cfg, 3);
  const auto b = make_data(cfg, 3);
  EXPECT_EQ(dataset_csv(a.train), dataset_csv(b.train));
  EXPECT_EQ(dataset_csv(a.ood_test), dataset_csv(b.ood_test));
  EXPECT_NE(dataset_csv(a.train), dataset_csv(make_data(cfg, 4).train));
  // 4 generated classes of 40, the fourth held out
  EXPECT_EQ(a.train.k(), 3u);
  EXPECT_EQ(a.train.size() + a.val.size() + a.test.size(), 120u);
  EXPECT_EQ(a.ood_train.size() + a.ood_test.size(), 40u);
  EXPECT_EQ(a.test.size(), 24u);
  EXPECT_EQ(a.ood_test.size(), 8u);
}

TEST(MakeData, NoHoldoutLeavesOodEmpty) {
  auto cfg = small_config("noholdout");
  cfg.holdout_class = 0;
  cfg.eval_sources = {"uniform"};
  const auto d = make_data(cfg, 0);
  EXPECT_EQ(d.train.k(), 4u);
  EXPECT_TRUE(d.ood_train.empty());
  EXPECT_THROW(make_source("holdout", cfg, d, 0), ConfigError);
}

TEST(Data, SaveLoadRoundTrip) {
  const auto cfg = small_config("saveload");
  const auto d = make_data(cfg, 1);
  save_data(fs::path(cfg.out_dir) / "data", d, config_hash(cfg));
  const auto back = load_data(fs::path(cfg.out_dir) / "data");
  EXPECT_EQ(dataset_csv(back.train), dataset_csv(d.train));
  EXPECT_EQ(dataset_csv(back.test), dataset_csv(d.test));
  EXPECT_EQ(back.ood_test.size(), d.ood_test.size());
  EXPECT_THROW(load_data(fs::path(cfg.out_dir) / "nothing"), ConfigError);
}

TEST(Sources, NoiseSetsDependOnSeedAndNameOnly) {
  const auto cfg = small_config("sources");
  const auto d = make_data(cfg, 2);
  const auto u1 = make_source("uniform", cfg, d, 2);
  const auto u2 = make_source("uniform", cfg, d, 2);
  const auto g = make_source("gaussian", cfg, d, 2);
  ASSERT_EQ(u1.samples.size(), 60u);
  EXPECT_EQ(u1.samples, u2.samples);
  EXPECT_NE(u1.samples, g.samples);
  EXPECT_EQ(make_source("rings", cfg, d, 2).samples.size(), 60u);
}

TEST(TrainingSources, ReflectsConfiguration) {
  auto cfg = small_config("trainsrc");
  const auto d = make_data(cfg, 0);
  EXPECT_EQ(training_sources(cfg, d), (std::vector<std::string>{"in_distribution", "holdout", "noise:gaussian"}));
  cfg.noise_kind = "none";
  EXPECT_EQ(training_sources(cfg, d), (std::vector<std::string>{"in_distribution", "holdout"}));
  cfg.aux_class = false;
  EXPECT_EQ(training_sources(cfg, d), (std::vector<std::string>{"in_distribution"}));
}

TEST(Evaluate, EveryMetricInUnitIntervalAndReproducible) {
  const auto cfg = small_config("evaluate");
  const auto d = make_data(cfg, 5);
  const auto trained = train_run(cfg, d, TrainMode::vrm, 5);
  std::vector<OodSet> sources;
  for (const auto& s : cfg.eval_sources) sources.push_back(make_source(s, cfg, d, 5));
  const auto r = evaluate_model(trained.best.model, d, cfg, cfg.detectors, sources, 5);
  ASSERT_EQ(r.rows.size(), cfg.detectors.size() * cfg.eval_sources.size());
  for (const auto& m : r.rows) {
    for (double v : {m.auroc, m.auprc, m.detection_accuracy}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_GE(r.clean_accuracy, 0.0);
  EXPECT_LE(r.clean_accuracy, 1.0);
  const auto again = evaluate_model(trained.best.model, d, cfg, cfg.detectors, sources, 5);
  EXPECT_EQ(results_csv(r), results_csv(again));
  const auto j = to_json(r, "T");
  EXPECT_EQ(j.at("timestamp"), "T");
  EXPECT_EQ(j.at("provenance").at("config_hash"), config_hash(cfg));
}

TEST(Evaluate, MahalanobisWithoutFitDataIsAnError) {
  const auto cfg = small_config("nofit");
  auto d = make_data(cfg, 0);
  const auto trained = train_run(cfg, d, TrainMode::vrm, 0);
  d.train = Dataset();
  const std::vector<OodSet> sources{make_source("holdout", cfg, d, 0)};
  EXPECT_THROW(evaluate_model(trained.best.model, d, cfg, {"mahalanobis"}, sources, 0), ConfigError);
  EXPECT_THROW(evaluate_model(trained.best.model, d, cfg, {"energy"}, sources, 0), ConfigError);
}

TEST(Evaluate, DimensionMismatchRejected) {
  const auto cfg = small_config("mismatch");
  const auto d = make_data(cfg, 0);
  ModelConfig mc = cfg.model_config(0);
  mc.input_dim = 3;
  const std::vector<OodSet> sources{make_source("holdout", cfg, d, 0)};
  EXPECT_THROW(evaluate_model(Model::init(mc), d, cfg, {"msp"}, sources, 0), ConfigError);
}

TEST(Commands, GenerateTrainEvaluateProfile) {
  const auto cfg = small_config("commands");
  EXPECT_THROW(cmd_train(cfg), ConfigError);
  cmd_generate(cfg);
  const std::string first = read_text(fs::path(cfg.out_dir) / "data" / "train.csv");
  cmd_generate(cfg);
  EXPECT_EQ(read_text(fs::path(cfg.out_dir) / "data" / "train.csv"), first);

  const auto r = cmd_train(cfg);
  const auto ckpt = load_checkpoint((fs::path(cfg.out_dir) / "model.vood").string());
  EXPECT_EQ(ckpt.meta.epoch, r.best.epoch);
  EXPECT_EQ(ckpt.meta.val_accuracy, r.best.val_accuracy);
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "history.csv"));

  const auto res = cmd_evaluate(cfg);
  const auto j = nlohmann::json::parse(read_text(fs::path(cfg.out_dir) / "results.json"));
  EXPECT_EQ(j.at("rows").size(), res.rows.size());
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "curves" / "aux_uniform.csv"));

  const auto reports = cmd_profile(cfg);
  ASSERT_EQ(reports.size(), 5u);
  EXPECT_EQ(reports[0].normalized_mac, 1.0);
  EXPECT_GT(reports[3].normalized_mac, reports[2].normalized_mac);
}

TEST(Compare, SingleSeedSchema) {
  auto cfg = small_config("compare");
  cfg.detectors = {"msp", "aux"};
  cfg.eval_sources = {"uniform"};
  const auto rep = run_compare(cfg);
  ASSERT_EQ(rep.rows.size(), 2u);
  ASSERT_EQ(rep.medians.size(), 2u);
  EXPECT_EQ(rep.medians[0].erm.auroc, rep.rows[0].erm.auroc);
  const auto j = to_json(rep, "T");
  EXPECT_TRUE(j.at("rows")[0].contains("ERM"));
  EXPECT_TRUE(j.at("rows")[0].contains("VRM"));
  const std::string csv = compare_csv(rep);
  EXPECT_NE(csv.find("erm_auroc,vrm_auroc,delta_auroc"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Ablation, TwoRowsPerSourceAndUnseenNeverTrainedOn) {
  auto cfg = small_config("ablation");
  cfg.detectors = {"aux"};
  cfg.eval_sources = {"holdout", "uniform"};
  const auto rep = run_ablation(cfg);
  std::map<std::string, int> per_source;
  for (const auto& r : rep.rows) ++per_source[r.metrics.source];
  EXPECT_EQ(per_source, (std::map<std::string, int>{{"holdout", 2}, {"rings", 2}, {"uniform", 2}}));
  for (const auto& [kind, trained_on] : rep.training_sources) {
    for (const auto& u : rep.unseen_sources) {
      EXPECT_EQ(std::count(trained_on.begin(), trained_on.end(), u), 0) << kind;
    }
  }
  EXPECT_EQ(rep.training_sources.at("none"), (std::vector<std::string>{"in_distribution", "holdout"}));
  cfg.noise_kinds = {"gaussian", "gaussian"};
  EXPECT_THROW(run_ablation(cfg), ConfigError);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
}

}  // namespace
}  // namespace vrmood

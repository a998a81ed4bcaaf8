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


// Experiment layer behind the command-line tool: a flat JSON configuration,
// the deterministic data pipeline, detector evaluation into results bundles,
// and the paired ERM/VRM, noise-ablation and cost-profile reports.
//
// Seeds: every random stream of a run is derived from the run seed and a
// stream name, so evaluation noise sets do not depend on which detectors or
// sources are requested.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmood/checkpoint.hpp"
#include "vrmood/data.hpp"
#include "vrmood/detectors.hpp"
#include "vrmood/error.hpp"
#include "vrmood/idx.hpp"
#include "vrmood/metrics.hpp"
#include "vrmood/model.hpp"
#include "vrmood/profiler.hpp"
#include "vrmood/trainer.hpp"
#include "vrmood/vicinal.hpp"

namespace vrmood {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named stream of a run.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  return derive_seed(seed, fnv1a(name));
}

/// Every knob of an experiment. With `holdout_class` > 0 that generated
/// class becomes the out-of-distribution training set, so the classifier
/// sees k - 1 classes.
struct ExperimentConfig {
  // data
  std::string dataset = "blobs";  // blobs | rings | idx
  std::size_t n_per_class = 200;
  std::size_t k = 4;
  double spread = 0.15;
  double center_radius = 4.0;
  std::vector<double> radii{1.0, 2.0};
  double thickness = 0.2;
  std::size_t holdout_class = 4;
  /// false keeps the held-out class for evaluation only, so the auxiliary
  /// class trains on noise alone.
  bool holdout_in_training = true;
  std::string idx_train_images;
  std::string idx_train_labels;
  std::string idx_test_images;
  std::string idx_test_labels;
  double test_fraction = 0.2;
  double val_fraction = 0.1;
  // model
  std::vector<std::size_t> hidden{64, 64};
  bool aux_class = true;
  // training
  std::string mode = "vrm";
  double lr0 = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  std::vector<double> milestones{0.6, 0.8};
  double lr_factor = 0.1;
  std::string lambda_dist = "uniform";  // uniform | beta | fixed
  double lambda_param = 1.0;            // beta alpha or the fixed lambda
  double p_noise = 0.5;
  std::string noise_kind = "gaussian";
  double ood_batch_fraction = 1.0 / 3.0;
  // detectors
  std::vector<std::string> detectors{"msp", "aux", "odin", "mahalanobis"};
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.0014;
  double shrinkage = 1e-6;
  // evaluation
  std::vector<std::string> eval_sources{"holdout", "uniform", "gaussian"};
  std::size_t eval_noise_count = 500;
  std::vector<double> unseen_radii{2.0};
  double unseen_thickness = 0.5;
  std::size_t unseen_n = 500;
  // experiment drivers
  std::size_t n_seeds = 5;
  std::vector<std::string> noise_kinds{"none", "gaussian"};
  std::vector<std::string> schemes{"base", "msp", "aux", "odin", "mahalanobis"};
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  std::size_t generated_classes() const { return dataset == "rings" ? radii.size() : (dataset == "idx" ? 10 : k); }
  std::size_t in_classes() const { return generated_classes() - (holdout_class > 0 ? 1 : 0); }

  void validate() const {
    if (dataset != "blobs" && dataset != "rings" && dataset != "idx") {
      throw ConfigError("dataset must be blobs, rings or idx, got '" + dataset + "'");
    }
    if (dataset == "idx" && (idx_train_images.empty() || idx_train_labels.empty() ||
                             idx_test_images.empty() || idx_test_labels.empty())) {
      throw ConfigError("idx dataset needs idx_train_images/labels and idx_test_images/labels");
    }
    if (dataset != "idx" && n_per_class < 4) throw ConfigError("n_per_class must be at least 4");
    if (dataset == "blobs" && k < 2) throw ConfigError("blobs need k >= 2");
    if (holdout_class > generated_classes()) throw ConfigError("holdout_class outside the generated classes");
    if (holdout_class > 0 && generated_classes() < 3) throw ConfigError("a held-out class needs at least 3 classes");
    if (in_classes() < 2) throw ConfigError("need at least 2 in-distribution classes");
    if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must lie in (0, 1)");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in (0, 1)");
    if (mode != "erm" && mode != "vrm") throw ConfigError("mode must be erm or vrm, got '" + mode + "'");
    if (eval_noise_count == 0) throw ConfigError("eval_noise_count must be positive");
    if (n_seeds == 0) throw ConfigError("n_seeds must be positive");
    model_config(0).validate();
    train_config(0).validate();
    odin().validate();
    for (const auto& d : detectors) parse_detector(d);
    for (const auto& n : noise_kinds) parse_noise_kind(n);
    for (const auto& s : schemes) parse_scheme(s);
    for (const auto& s : eval_sources) {
      if (s != "holdout" && s != "uniform" && s != "gaussian" && s != "rings") {
        throw ConfigError("unknown evaluation source '" + s + "'");
      }
    }
    if (!(shrinkage >= 0)) throw ConfigError("shrinkage must be nonnegative");
  }

  TrainMode train_mode() const { return mode == "erm" ? TrainMode::erm : TrainMode::vrm; }

  ModelConfig model_config(std::uint64_t run_seed) const {
    std::size_t dim = 2;
    if (dataset == "idx") dim = 28 * 28;
    return {dim, hidden, in_classes(), aux_class, stream_seed(run_seed, "model")};
  }

  MixPolicy mix_policy() const {
    MixPolicy p;
    if (lambda_dist == "uniform") {
      p.lambda_dist = LambdaUniform{};
    } else if (lambda_dist == "beta") {
      p.lambda_dist = LambdaBeta{lambda_param};
    } else if (lambda_dist == "fixed") {
      p.lambda_dist = LambdaFixed{lambda_param};
    } else {
      throw ConfigError("lambda_dist must be uniform, beta or fixed, got '" + lambda_dist + "'");
    }
    p.p_noise = p_noise;
    p.noise_kind = parse_noise_kind(noise_kind);
    return p;
  }

  TrainConfig train_config(std::uint64_t run_seed) const {
    TrainConfig c;
    c.lr0 = lr0;
    c.momentum = momentum;
    c.weight_decay = weight_decay;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.milestones = milestones;
    c.lr_factor = lr_factor;
    c.seed = run_seed;
    c.mix_policy = mix_policy();
    c.ood_batch_fraction = ood_batch_fraction;
    return c;
  }

  OdinParams odin() const { return {odin_temperature, odin_epsilon}; }
};

#define VRMOOD_CONFIG_FIELDS(X)                                                              \
  X(dataset) X(n_per_class) X(k) X(spread) X(center_radius) X(radii) X(thickness)            \
  X(holdout_class) X(holdout_in_training) X(idx_train_images) X(idx_train_labels) X(idx_test_images)                \
  X(idx_test_labels) X(test_fraction) X(val_fraction) X(hidden) X(aux_class) X(mode) X(lr0)  \
  X(momentum) X(weight_decay) X(epochs) X(batch_size) X(milestones) X(lr_factor)             \
  X(lambda_dist) X(lambda_param) X(p_noise) X(noise_kind) X(ood_batch_fraction) X(detectors) \
  X(odin_temperature) X(odin_epsilon) X(shrinkage) X(eval_sources) X(eval_noise_count)       \
  X(unseen_radii) X(unseen_thickness) X(unseen_n) X(n_seeds) X(noise_kinds) X(schemes)       \
  X(seed) X(out_dir)

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = nlohmann::json::object();
#define VRMOOD_PUT(f) j[#f] = c.f;
  VRMOOD_CONFIG_FIELDS(VRMOOD_PUT)
#undef VRMOOD_PUT
  return j;
}

/// Reads a flat JSON object. Absent keys keep their defaults; unknown keys
/// and wrongly typed values are configuration errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  std::set<std::string> known;
#define VRMOOD_GET(f)                                                          \
  known.insert(#f);                                                            \
  if (j.contains(#f)) {                                                        \
    try {                                                                      \
      j.at(#f).get_to(c.f);                                                    \
    } catch (const nlohmann::json::exception& e) {                             \
      throw ConfigError(std::string("config key '" #f "': ") + e.what());      \
    }                                                                          \
  }
  VRMOOD_CONFIG_FIELDS(VRMOOD_GET)
#undef VRMOOD_GET
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

/// Hash of everything that influences results (the output directory does
/// not), as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("out_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- data

struct DataBundle {
  Dataset train;
  Dataset val;
  Dataset test;
  /// Held-out class samples used for training (empty without a holdout).
  Dataset ood_train;
  /// Held-out class samples reserved for evaluation.
  Dataset ood_test;
};

namespace detail {

inline std::pair<Dataset, Dataset> split_pair(const Dataset& d, double fraction, std::uint64_t seed) {
  auto s = train_val_split(d, {fraction, seed});
  return {std::move(s.train), std::move(s.val)};
}

}  // namespace detail

/// Deterministic train/val/test (and held-out OoD) sets for one run seed.
inline DataBundle make_data(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  cfg.validate();
  Dataset pool, test_pool;
  if (cfg.dataset == "blobs") {
    pool = gen_blobs(cfg.n_per_class, cfg.k, circle_centers(cfg.k, cfg.center_radius), cfg.spread,
                     stream_seed(run_seed, "data"));
  } else if (cfg.dataset == "rings") {
    pool = gen_rings(cfg.n_per_class, cfg.radii, cfg.thickness, stream_seed(run_seed, "data"));
  } else {
    pool = load_idx(cfg.idx_train_images, cfg.idx_train_labels);
    test_pool = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
  }
  DataBundle b;
  if (cfg.holdout_class > 0) {
    auto h = holdout_class_as_ood(pool, cfg.holdout_class);
    pool = std::move(h.in);
    if (test_pool.empty()) {
      std::tie(b.ood_train, b.ood_test) =
          detail::split_pair(h.out, cfg.test_fraction, stream_seed(run_seed, "split_ood"));
    } else {
      b.ood_train = std::move(h.out);
      auto ht = holdout_class_as_ood(test_pool, cfg.holdout_class);
      test_pool = std::move(ht.in);
      b.ood_test = std::move(ht.out);
    }
  }
  Dataset rest;
  if (test_pool.empty()) {
    std::tie(rest, b.test) = detail::split_pair(pool, cfg.test_fraction, stream_seed(run_seed, "split_test"));
  } else {
    rest = std::move(pool);
    b.test = std::move(test_pool);
  }
  std::tie(b.train, b.val) = detail::split_pair(rest, cfg.val_fraction, stream_seed(run_seed, "split_val"));
  return b;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline std::string dataset_csv(const Dataset& d) {
  std::ostringstream os;
  write_dataset_csv(os, d);
  return os.str();
}

/// Writes train/val/test (and ood_train/ood_test) CSVs plus a stats.json
/// sidecar holding the class count, sizes and training-set statistics.
inline void save_data(const std::filesystem::path& dir, const DataBundle& b, const std::string& hash) {
  write_text(dir / "train.csv", dataset_csv(b.train));
  write_text(dir / "val.csv", dataset_csv(b.val));
  write_text(dir / "test.csv", dataset_csv(b.test));
  if (!b.ood_train.empty()) write_text(dir / "ood_train.csv", dataset_csv(b.ood_train));
  if (!b.ood_test.empty()) write_text(dir / "ood_test.csv", dataset_csv(b.ood_test));
  nlohmann::json stats = {{"config_hash", hash},
                          {"k", b.train.k()},
                          {"dim", b.train.dim()},
                          {"sizes",
                           {{"train", b.train.size()},
                            {"val", b.val.size()},
                            {"test", b.test.size()},
                            {"ood_train", b.ood_train.size()},
                            {"ood_test", b.ood_test.size()}}},
                          {"train_mean", b.train.stats().mean},
                          {"train_std", b.train.stats().std}};
  write_text(dir / "stats.json", stats.dump(2) + "\n");
}

inline DataBundle load_data(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "stats.json")) {
    throw ConfigError("no generated data in " + dir.string() + "; run `generate` first");
  }
  const auto stats = nlohmann::json::parse(read_text(dir / "stats.json"));
  const std::size_t k = stats.at("k").get<std::size_t>();
  auto load = [&](const char* name, std::size_t classes) {
    const auto p = dir / name;
    return std::filesystem::exists(p) ? load_dataset_csv(p.string(), classes) : Dataset();
  };
  DataBundle b;
  b.train = load("train.csv", k);
  b.val = load("val.csv", k);
  b.test = load("test.csv", k);
  b.ood_train = load("ood_train.csv", 1);
  b.ood_test = load("ood_test.csv", 1);
  if (b.test.empty()) throw ConfigError("no in-distribution test data in " + dir.string());
  return b;
}

// ---------------------------------------------------------------- evaluation

struct OodSet {
  std::string name;
  std::vector<Tensor> samples;
};

/// Evaluation OoD set by name. Noise sets follow the training-set statistics
/// and take their seed from (run seed, source name).
inline OodSet make_source(const std::string& name, const ExperimentConfig& cfg, const DataBundle& data,
                          std::uint64_t run_seed) {
  OodSet s{name, {}};
  if (name == "holdout") {
    if (data.ood_test.empty()) throw ConfigError("holdout source requested but no class was held out");
    s.samples = data.ood_test.features();
  } else if (name == "uniform" || name == "gaussian") {
    const Dataset& ref = data.train.empty() ? data.test : data.train;
    const NoiseSpec spec = noise_like(ref, parse_noise_kind(name));
    Rng rng(stream_seed(run_seed, name));
    for (std::size_t i = 0; i < cfg.eval_noise_count; ++i) s.samples.push_back(spec.sample(rng));
  } else if (name == "rings") {
    const std::size_t per = std::max<std::size_t>(1, cfg.unseen_n / cfg.unseen_radii.size());
    s.samples = gen_rings(per, cfg.unseen_radii, cfg.unseen_thickness, stream_seed(run_seed, name)).features();
    if (data.test.dim() != 2) throw ConfigError("the rings source is 2-D; the data is not");
  } else {
    throw ConfigError("unknown evaluation source '" + name + "'");
  }
  return s;
}

/// Names of everything a run trained on, for provenance.
inline std::vector<std::string> training_sources(const ExperimentConfig& cfg, const DataBundle& data) {
  std::vector<std::string> out{"in_distribution"};
  if (!cfg.aux_class) return out;
  const bool holdout = cfg.holdout_in_training && !data.ood_train.empty();
  if (holdout) out.push_back("holdout");
  const NoiseKind kind = parse_noise_kind(cfg.noise_kind);
  if (kind != NoiseKind::none && (cfg.p_noise > 0.0 || !holdout)) {
    out.push_back("noise:" + cfg.noise_kind);
  }
  return out;
}

struct MetricRow {
  std::string detector;
  std::string source;
  double auroc = 0;
  double auprc = 0;
  double detection_accuracy = 0;
};

struct ResultsBundle {
  std::string config_hash;
  std::uint64_t seed = 0;
  double clean_accuracy = 0;
  std::vector<std::string> training_sources;
  std::vector<MetricRow> rows;
  /// ROC curve per row, same order.
  std::vector<std::vector<RocPoint>> curves;
};

/// Scores the in-distribution test set and every source with every
/// detector. In-distribution samples are negatives, source samples positives.
inline ResultsBundle evaluate_model(const Model& model, const DataBundle& data, const ExperimentConfig& cfg,
                                    const std::vector<std::string>& detectors,
                                    const std::vector<OodSet>& sources, std::uint64_t run_seed) {
  if (data.test.dim() != model.input_dim() || data.test.k() != model.k()) {
    throw ConfigError("checkpoint (dim " + std::to_string(model.input_dim()) + ", k " +
                      std::to_string(model.k()) + ") does not match the data (dim " +
                      std::to_string(data.test.dim()) + ", k " + std::to_string(data.test.k()) + ")");
  }
  ResultsBundle r;
  r.config_hash = config_hash(cfg);
  r.seed = run_seed;
  r.clean_accuracy = accuracy(model, data.test);
  r.training_sources = training_sources(cfg, data);
  for (const auto& name : detectors) {
    const DetectorKind kind = parse_detector(name);
    std::optional<MahalanobisStats> stats;
    if (kind == DetectorKind::aux && !model.has_aux()) {
      throw ConfigError("aux detector requested but the model has no auxiliary class");
    }
    if (kind == DetectorKind::mahalanobis) {
      if (data.train.empty()) throw ConfigError("mahalanobis needs in-distribution training data to fit on");
      stats = fit_mahalanobis(model, data.train, cfg.shrinkage);
    }
    auto score = [&](const Tensor& x) {
      switch (kind) {
        case DetectorKind::msp: return msp_score(model, x).value;
        case DetectorKind::aux: return aux_score(model, x).value;
        case DetectorKind::odin: return odin_score(model, x, cfg.odin()).value;
        case DetectorKind::mahalanobis: return mahalanobis_score(*stats, model, x).value;
      }
      return 0.0;
    };
    std::vector<ScoredSample> in;
    for (const auto& x : data.test.features()) in.push_back({score(x), false});
    for (const auto& src : sources) {
      std::vector<ScoredSample> all = in;
      for (const auto& x : src.samples) all.push_back({score(x), true});
      r.rows.push_back({name, src.name, auroc(all), auprc(all), detection_accuracy(all)});
      r.curves.push_back(roc_curve(all));
    }
  }
  return r;
}

inline nlohmann::json to_json(const MetricRow& m) {
  return {{"detector", m.detector},
          {"source", m.source},
          {"auroc", m.auroc},
          {"auprc", m.auprc},
          {"detection_accuracy", m.detection_accuracy}};
}

/// Results JSON. The wall-clock time sits alone under "timestamp"; every
/// other key is a pure function of the configuration.
inline nlohmann::json to_json(const ResultsBundle& r, const std::string& timestamp) {
  auto rows = nlohmann::json::array();
  for (const auto& m : r.rows) rows.push_back(to_json(m));
  return {{"provenance", {{"config_hash", r.config_hash}, {"seed", r.seed}, {"training_sources", r.training_sources}}},
          {"timestamp", timestamp},
          {"clean_accuracy", r.clean_accuracy},
          {"rows", rows}};
}

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string results_csv(const ResultsBundle& r) {
  std::ostringstream os;
  os << "config_hash,detector,source,auroc,auprc,detection_accuracy,clean_accuracy\n";
  for (const auto& m : r.rows) {
    os << r.config_hash << ',' << m.detector << ',' << m.source << ',' << fixed6(m.auroc) << ','
       << fixed6(m.auprc) << ',' << fixed6(m.detection_accuracy) << ',' << fixed6(r.clean_accuracy) << '\n';
  }
  return os.str();
}

inline std::string results_table(const ResultsBundle& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "clean accuracy %.4f  (config %s)\n", r.clean_accuracy, r.config_hash.c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "%-12s %-10s %8s %8s %8s\n", "detector", "source", "AUROC", "AUPRC", "DetAcc");
  os << buf;
  for (const auto& m : r.rows) {
    std::snprintf(buf, sizeof buf, "%-12s %-10s %8.4f %8.4f %8.4f\n", m.detector.c_str(), m.source.c_str(),
                  m.auroc, m.auprc, m.detection_accuracy);
    os << buf;
  }
  return os.str();
}

// ---------------------------------------------------------------- commands

/// Paths of one experiment's artifacts under the output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path checkpoint() const { return root / "model.vood"; }
  std::filesystem::path history() const { return root / "history.csv"; }
};

struct TrainedRun {
  TrainResult result;
  DataBundle data;
};

/// Trains one model for `run_seed` on the given data.
inline TrainResult train_run(const ExperimentConfig& cfg, const DataBundle& data, TrainMode mode,
                             std::uint64_t run_seed) {
  const Model init = Model::init(cfg.model_config(run_seed));
  OodSource ood;
  if (cfg.aux_class && cfg.holdout_in_training && !data.ood_train.empty()) ood.data = &data.ood_train;
  return train(init, data.train, ood, data.val, cfg.train_config(run_seed), mode);
}

/// Writes the generated datasets for cfg.seed. Returns the data directory.
inline std::filesystem::path cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout out{cfg.out_dir};
  save_data(out.data(), make_data(cfg, cfg.seed), config_hash(cfg));
  write_text(out.root / "config.json", to_json(cfg).dump(2) + "\n");
  return out.data();
}

/// Trains on previously generated data; writes the checkpoint, history CSV
/// and a train.json summary.
inline TrainResult cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const Layout out{cfg.out_dir};
  const DataBundle data = load_data(out.data());
  if (data.train.k() != cfg.in_classes() || data.train.dim() != cfg.model_config(0).input_dim) {
    throw ConfigError("generated data does not match the config; rerun `generate`");
  }
  TrainResult r = train_run(cfg, data, cfg.train_mode(), cfg.seed);
  save_checkpoint(out.checkpoint().string(), r.best.model, r.best.meta());
  std::ostringstream hist;
  write_history_csv(hist, r.history);
  write_text(out.history(), hist.str());
  nlohmann::json summary = {{"config_hash", config_hash(cfg)},
                            {"mode", cfg.mode},
                            {"best_epoch", r.best.epoch},
                            {"val_accuracy", r.best.val_accuracy},
                            {"training_sources", training_sources(cfg, data)}};
  write_text(out.root / "train.json", summary.dump(2) + "\n");
  return r;
}

/// Evaluates a checkpoint (default: the trained one) with the configured
/// detectors on the configured sources; writes results.json, results.csv and
/// one ROC curve CSV per row.
inline ResultsBundle cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_path = "") {
  cfg.validate();
  const Layout out{cfg.out_dir};
  const auto ckpt = load_checkpoint(checkpoint_path.empty() ? out.checkpoint().string() : checkpoint_path);
  const DataBundle data = load_data(out.data());
  std::vector<OodSet> sources;
  for (const auto& s : cfg.eval_sources) sources.push_back(make_source(s, cfg, data, cfg.seed));
  ResultsBundle r = evaluate_model(ckpt.model, data, cfg, cfg.detectors, sources, cfg.seed);
  write_text(out.root / "results.json", to_json(r, utc_timestamp()).dump(2) + "\n");
  write_text(out.root / "results.csv", results_csv(r));
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    std::ostringstream os;
    write_curve_csv(os, r.curves[i]);
    write_text(out.root / "curves" / (r.rows[i].detector + "_" + r.rows[i].source + ".csv"), os.str());
  }
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CompareRow {
  std::string seed;  // decimal run seed, or "median"
  std::string source;
  std::string detector;
  MetricRow erm;
  MetricRow vrm;
};

struct CompareReport {
  std::string config_hash;
  std::vector<CompareRow> rows;     // per seed
  std::vector<CompareRow> medians;  // per (source, detector)
  std::vector<double> erm_clean_accuracy;
  std::vector<double> vrm_clean_accuracy;
};

/// ERM (with the auxiliary class trained on the same OoD inputs, unmixed)
/// against VRM over n_seeds run seeds cfg.seed, cfg.seed + 1, ...
inline CompareReport run_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  CompareReport rep;
  rep.config_hash = config_hash(cfg);
  for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
    const std::uint64_t run_seed = cfg.seed + s;
    const DataBundle data = make_data(cfg, run_seed);
    std::vector<OodSet> sources;
    for (const auto& name : cfg.eval_sources) sources.push_back(make_source(name, cfg, data, run_seed));
    const auto erm = train_run(cfg, data, TrainMode::erm, run_seed);
    const auto vrm = train_run(cfg, data, TrainMode::vrm, run_seed);
    const auto re = evaluate_model(erm.best.model, data, cfg, cfg.detectors, sources, run_seed);
    const auto rv = evaluate_model(vrm.best.model, data, cfg, cfg.detectors, sources, run_seed);
    rep.erm_clean_accuracy.push_back(re.clean_accuracy);
    rep.vrm_clean_accuracy.push_back(rv.clean_accuracy);
    for (std::size_t i = 0; i < re.rows.size(); ++i) {
      rep.rows.push_back({std::to_string(run_seed), re.rows[i].source, re.rows[i].detector, re.rows[i], rv.rows[i]});
    }
  }
  const std::size_t per_seed = rep.rows.size() / cfg.n_seeds;
  for (std::size_t i = 0; i < per_seed; ++i) {
    std::vector<double> ea, eb, ed, va, vb, vd;
    for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
      const auto& r = rep.rows[s * per_seed + i];
      ea.push_back(r.erm.auroc), eb.push_back(r.erm.auprc), ed.push_back(r.erm.detection_accuracy);
      va.push_back(r.vrm.auroc), vb.push_back(r.vrm.auprc), vd.push_back(r.vrm.detection_accuracy);
    }
    const auto& first = rep.rows[i];
    rep.medians.push_back({"median", first.source, first.detector,
                           {first.detector, first.source, median(ea), median(eb), median(ed)},
                           {first.detector, first.source, median(va), median(vb), median(vd)}});
  }
  return rep;
}

inline std::string compare_csv(const CompareReport& rep) {
  std::ostringstream os;
  os << "config_hash,seed,source,detector,erm_auroc,vrm_auroc,delta_auroc,erm_auprc,vrm_auprc,delta_auprc,"
        "erm_detection_accuracy,vrm_detection_accuracy,delta_detection_accuracy\n";
  auto emit = [&](const CompareRow& r) {
    os << rep.config_hash << ',' << r.seed << ',' << r.source << ',' << r.detector << ',' << fixed6(r.erm.auroc)
       << ',' << fixed6(r.vrm.auroc) << ',' << fixed6(r.vrm.auroc - r.erm.auroc) << ',' << fixed6(r.erm.auprc)
       << ',' << fixed6(r.vrm.auprc) << ',' << fixed6(r.vrm.auprc - r.erm.auprc) << ','
       << fixed6(r.erm.detection_accuracy) << ',' << fixed6(r.vrm.detection_accuracy) << ','
       << fixed6(r.vrm.detection_accuracy - r.erm.detection_accuracy) << '\n';
  };
  for (const auto& r : rep.rows) emit(r);
  for (const auto& r : rep.medians) emit(r);
  return os.str();
}

inline nlohmann::json to_json(const CompareReport& rep, const std::string& timestamp) {
  auto rows = [](const std::vector<CompareRow>& v) {
    auto a = nlohmann::json::array();
    for (const auto& r : v) {
      a.push_back({{"seed", r.seed},
                   {"source", r.source},
                   {"detector", r.detector},
                   {"ERM", {{"auroc", r.erm.auroc}, {"auprc", r.erm.auprc}, {"detection_accuracy", r.erm.detection_accuracy}}},
                   {"VRM", {{"auroc", r.vrm.auroc}, {"auprc", r.vrm.auprc}, {"detection_accuracy", r.vrm.detection_accuracy}}},
                   {"delta_auroc", r.vrm.auroc - r.erm.auroc},
                   {"delta_detection_accuracy", r.vrm.detection_accuracy - r.erm.detection_accuracy}});
    }
    return a;
  };
  return {{"provenance", {{"config_hash", rep.config_hash}}},
          {"timestamp", timestamp},
          {"clean_accuracy", {{"ERM", rep.erm_clean_accuracy}, {"VRM", rep.vrm_clean_accuracy}}},
          {"rows", rows(rep.rows)},
          {"medians", rows(rep.medians)}};
}

inline CompareReport cmd_compare(const ExperimentConfig& cfg) {
  CompareReport rep = run_compare(cfg);
  const Layout out{cfg.out_dir};
  write_text(out.root / "compare.json", to_json(rep, utc_timestamp()).dump(2) + "\n");
  write_text(out.root / "compare.csv", compare_csv(rep));
  return rep;
}

struct AblationRow {
  std::string noise_kind;
  std::string seed;  // decimal run seed, or "median"
  bool unseen = false;
  MetricRow metrics;
};

struct AblationReport {
  std::string config_hash;
  std::map<std::string, std::vector<std::string>> training_sources;  // per noise kind
  std::vector<std::string> unseen_sources;
  std::vector<AblationRow> rows;
  std::vector<AblationRow> medians;
};

/// One VRM model per noise kind and seed, evaluated on the configured
/// (seen) sources plus the unseen ring source, which no training set ever
/// contains.
inline AblationReport run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  std::set<std::string> kinds(cfg.noise_kinds.begin(), cfg.noise_kinds.end());
  if (kinds.size() < 2) throw ConfigError("ablate-noise needs at least two distinct noise_kinds");
  AblationReport rep;
  rep.config_hash = config_hash(cfg);
  rep.unseen_sources = {"rings"};
  std::vector<std::string> seen;
  for (const auto& s : cfg.eval_sources) {
    if (s != "rings") seen.push_back(s);
  }
  for (const auto& kind : cfg.noise_kinds) {
    ExperimentConfig c = cfg;
    c.noise_kind = kind;
    for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
      const std::uint64_t run_seed = cfg.seed + s;
      const DataBundle data = make_data(c, run_seed);
      const auto trained_on = training_sources(c, data);
      for (const auto& u : rep.unseen_sources) {
        if (std::find(trained_on.begin(), trained_on.end(), u) != trained_on.end()) {
          throw Error("unseen source '" + u + "' leaked into training");
        }
      }
      rep.training_sources[kind] = trained_on;
      std::vector<OodSet> sources;
      for (const auto& name : seen) sources.push_back(make_source(name, c, data, run_seed));
      for (const auto& name : rep.unseen_sources) sources.push_back(make_source(name, c, data, run_seed));
      const auto trained = train_run(c, data, TrainMode::vrm, run_seed);
      const auto res = evaluate_model(trained.best.model, data, c, c.detectors, sources, run_seed);
      for (const auto& m : res.rows) {
        const bool unseen = std::find(rep.unseen_sources.begin(), rep.unseen_sources.end(), m.source) !=
                            rep.unseen_sources.end();
        rep.rows.push_back({kind, std::to_string(run_seed), unseen, m});
      }
    }
  }
  const std::size_t per_run = rep.rows.size() / (cfg.noise_kinds.size() * cfg.n_seeds);
  for (std::size_t g = 0; g < cfg.noise_kinds.size(); ++g) {
    for (std::size_t i = 0; i < per_run; ++i) {
      std::vector<double> a, b, d;
      for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
        const auto& m = rep.rows[(g * cfg.n_seeds + s) * per_run + i].metrics;
        a.push_back(m.auroc), b.push_back(m.auprc), d.push_back(m.detection_accuracy);
      }
      const auto& first = rep.rows[g * cfg.n_seeds * per_run + i];
      rep.medians.push_back({first.noise_kind, "median", first.unseen,
                             {first.metrics.detector, first.metrics.source, median(a), median(b), median(d)}});
    }
  }
  return rep;
}

inline std::string ablation_csv(const AblationReport& rep) {
  std::ostringstream os;
  os << "config_hash,noise_kind,seed,source,unseen,detector,auroc,auprc,detection_accuracy\n";
  auto emit = [&](const AblationRow& r) {
    os << rep.config_hash << ',' << r.noise_kind << ',' << r.seed << ',' << r.metrics.source << ','
       << (r.unseen ? 1 : 0) << ',' << r.metrics.detector << ',' << fixed6(r.metrics.auroc) << ','
       << fixed6(r.metrics.auprc) << ',' << fixed6(r.metrics.detection_accuracy) << '\n';
  };
  for (const auto& r : rep.rows) emit(r);
  for (const auto& r : rep.medians) emit(r);
  return os.str();
}

inline nlohmann::json to_json(const AblationReport& rep, const std::string& timestamp) {
  auto rows = [](const std::vector<AblationRow>& v) {
    auto a = nlohmann::json::array();
    for (const auto& r : v) {
      nlohmann::json j = to_json(r.metrics);
      j["noise_kind"] = r.noise_kind;
      j["seed"] = r.seed;
      j["unseen"] = r.unseen;
      a.push_back(j);
    }
    return a;
  };
  return {{"provenance",
           {{"config_hash", rep.config_hash},
            {"training_sources", rep.training_sources},
            {"unseen_sources", rep.unseen_sources}}},
          {"timestamp", timestamp},
          {"rows", rows(rep.rows)},
          {"medians", rows(rep.medians)}};
}

inline AblationReport cmd_ablate_noise(const ExperimentConfig& cfg) {
  AblationReport rep = run_ablation(cfg);
  const Layout out{cfg.out_dir};
  write_text(out.root / "ablation.json", to_json(rep, utc_timestamp()).dump(2) + "\n");
  write_text(out.root / "ablation.csv", ablation_csv(rep));
  return rep;
}

/// Cost reports for the configured schemes on a checkpoint (default: the
/// trained one). Mahalanobis statistics are fitted on the generated
/// training data. Writes profile.json plus profile.txt or profile.csv.
inline std::vector<CostReport> cmd_profile(const ExperimentConfig& cfg, const std::string& checkpoint_path = "",
                                           bool csv = false) {
  cfg.validate();
  const Layout out{cfg.out_dir};
  const auto ckpt = load_checkpoint(checkpoint_path.empty() ? out.checkpoint().string() : checkpoint_path);
  std::vector<Scheme> schemes;
  for (const auto& s : cfg.schemes) schemes.push_back(parse_scheme(s));
  std::optional<MahalanobisStats> stats;
  if (std::find(schemes.begin(), schemes.end(), Scheme::mahalanobis) != schemes.end()) {
    const DataBundle data = load_data(out.data());
    if (data.train.empty()) throw ConfigError("mahalanobis profiling needs generated training data");
    stats = fit_mahalanobis(ckpt.model.without_aux(), data.train, cfg.shrinkage);
  }
  const auto reports = profile(schemes, ckpt.model, stats ? &*stats : nullptr, cfg.odin());
  nlohmann::json j = {{"provenance", {{"config_hash", config_hash(cfg)}}}, {"reports", to_json(reports)}};
  write_text(out.root / "profile.json", j.dump(2) + "\n");
  std::ostringstream os;
  if (csv) {
    write_cost_csv(os, reports);
    write_text(out.root / "profile.csv", os.str());
  } else {
    write_cost_table(os, reports);
    write_text(out.root / "profile.txt", os.str());
  }
  return reports;
}

}  // namespace vrmood

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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vrmood/error.hpp"
#include "vrmood/tensor.hpp"

namespace vrmood {

/// Per-dimension population mean and standard deviation.
struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> std;
};

inline FeatureStats compute_stats(const std::vector<Tensor>& features) {
  FeatureStats s;
  if (features.empty()) return s;
  const std::size_t d = features.front().size();
  s.mean.assign(d, 0.0);
  s.std.assign(d, 0.0);
  for (const auto& f : features) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += f[j];
  }
  const double n = static_cast<double>(features.size());
  for (double& m : s.mean) m /= n;
  for (const auto& f : features) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = f[j] - s.mean[j];
      s.std[j] += c * c;
    }
  }
  for (double& v : s.std) v = std::sqrt(v / n);
  return s;
}

/// Labeled feature vectors. Labels are 1-based: every label lies in [1, k].
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<Tensor> features, std::vector<std::size_t> labels, std::size_t k)
      : features_(std::move(features)), labels_(std::move(labels)), k_(k) {
    if (features_.size() != labels_.size()) {
      throw DimensionError("dataset has " + std::to_string(features_.size()) +
                           " feature rows but " + std::to_string(labels_.size()) + " labels");
    }
    if (k_ == 0) throw ConfigError("dataset class count must be positive");
    for (const auto& f : features_) {
      if (f.rank() != 1 || f.size() != features_.front().size()) {
        throw DimensionError("dataset features must be vectors of one common length");
      }
    }
    for (std::size_t y : labels_) {
      if (y < 1 || y > k_) {
        throw ConfigError("label " + std::to_string(y) + " outside [1, " + std::to_string(k_) + "]");
      }
    }
    stats_ = compute_stats(features_);
  }

  std::size_t size() const noexcept { return features_.size(); }
  bool empty() const noexcept { return features_.empty(); }
  std::size_t k() const noexcept { return k_; }
  std::size_t dim() const noexcept { return features_.empty() ? 0 : features_.front().size(); }

  const Tensor& feature(std::size_t i) const { return features_[i]; }
  std::size_t label(std::size_t i) const { return labels_[i]; }
  const std::vector<Tensor>& features() const noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  const FeatureStats& stats() const noexcept { return stats_; }

  std::vector<std::size_t> indices_of_class(std::size_t c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == c) out.push_back(i);
    }
    return out;
  }

  /// Subset in the given index order.
  Dataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<Tensor> f;
    std::vector<std::size_t> y;
    f.reserve(indices.size());
    y.reserve(indices.size());
    for (std::size_t i : indices) {
      f.push_back(features_.at(i));
      y.push_back(labels_.at(i));
    }
    return Dataset(std::move(f), std::move(y), k_);
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.k_ == b.k_ && a.labels_ == b.labels_ && a.features_ == b.features_;
  }

 private:
  std::vector<Tensor> features_;
  std::vector<std::size_t> labels_;
  std::size_t k_ = 1;
  FeatureStats stats_;
};

/// `k` points evenly spaced on a circle of the given radius.
inline std::vector<std::vector<double>> circle_centers(std::size_t k, double radius) {
  std::vector<std::vector<double>> c;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    c.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return c;
}

/// Isotropic Gaussian clusters, `n_per_class` points around each center.
inline Dataset gen_blobs(std::size_t n_per_class, std::size_t k,
                         const std::vector<std::vector<double>>& centers, double spread,
                         std::uint64_t seed) {
  if (k < 2) throw ConfigError("gen_blobs needs k >= 2");
  if (centers.size() != k) {
    throw ConfigError("gen_blobs: " + std::to_string(centers.size()) + " centers for k=" +
                      std::to_string(k));
  }
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ConfigError("gen_blobs: spread must be >= 0");
  const std::size_t d = centers.front().size();
  if (d == 0) throw ConfigError("gen_blobs: zero-dimensional centers");
  for (const auto& c : centers) {
    if (c.size() != d) throw ConfigError("gen_blobs: centers differ in dimension");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      std::vector<double> x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = centers[c][j] + spread * normal(rng);
      features.push_back(Tensor::vector(std::move(x)));
      labels.push_back(c + 1);
    }
  }
  return Dataset(std::move(features), std::move(labels), k);
}

/// True when two annuli of the given thickness intersect.
inline bool rings_overlap(const std::vector<double>& radii, double thickness) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    for (std::size_t j = i + 1; j < radii.size(); ++j) {
      if (std::abs(radii[i] - radii[j]) < thickness) return true;
    }
  }
  return false;
}

/// Concentric 2-D annuli, one class per radius. The radial offset is uniform
/// in [-thickness/2, thickness/2].
inline Dataset gen_rings(std::size_t n_per_class, const std::vector<double>& radii,
                         double thickness, std::uint64_t seed) {
  if (radii.empty()) throw ConfigError("gen_rings needs at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ConfigError("gen_rings: radii must be positive");
    for (std::size_t j = 0; j < i; ++j) {
      if (radii[i] == radii[j]) throw ConfigError("gen_rings: radii must be distinct");
    }
  }
  if (!(thickness >= 0.0)) throw ConfigError("gen_rings: thickness must be >= 0");
  if (rings_overlap(radii, thickness)) {
    std::clog << "warning: gen_rings radii closer than thickness; classes overlap\n";
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < radii.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const double r = radii[c] + thickness * (unit(rng) - 0.5);
      features.push_back(Tensor::vector({r * std::cos(angle), r * std::sin(angle)}));
      labels.push_back(c + 1);
    }
  }
  return Dataset(std::move(features), std::move(labels), radii.size());
}

struct HoldoutSplit {
  /// Remaining classes, relabeled in order onto [1, k-1].
  Dataset in;
  /// Samples of the held-out class, all labeled 1 in a single-class set.
  Dataset out;
};

inline HoldoutSplit holdout_class_as_ood(const Dataset& data, std::size_t class_id) {
  if (data.k() < 3) throw ConfigError("holdout_class_as_ood needs k >= 3");
  if (class_id < 1 || class_id > data.k()) {
    throw ConfigError("holdout class " + std::to_string(class_id) + " outside [1, " +
                      std::to_string(data.k()) + "]");
  }
  std::vector<Tensor> fin, fout;
  std::vector<std::size_t> yin, yout;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t y = data.label(i);
    if (y == class_id) {
      fout.push_back(data.feature(i));
      yout.push_back(1);
    } else {
      fin.push_back(data.feature(i));
      yin.push_back(y > class_id ? y - 1 : y);
    }
  }
  return {Dataset(std::move(fin), std::move(yin), data.k() - 1),
          Dataset(std::move(fout), std::move(yout), 1)};
}

struct SplitSpec {
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct TrainValSplit {
  Dataset train;
  Dataset val;
};

/// Seeded shuffle followed by a per-class split. The validation total is
/// round(n * val_fraction), apportioned across classes by largest remainder so
/// each class is within one sample of its exact share.
inline TrainValSplit train_val_split(const Dataset& data, const SplitSpec& spec) {
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (data.size() < 2) throw DegenerateInputError("train_val_split needs at least 2 samples");
  const std::size_t k = data.k();
  std::vector<std::size_t> counts(k + 1, 0);
  for (std::size_t y : data.labels()) ++counts[y];
  for (std::size_t c = 1; c <= k; ++c) {
    if (counts[c] == 1) {
      throw DegenerateInputError("class " + std::to_string(c) + " has fewer than 2 members");
    }
  }

  const auto total_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(data.size()) * spec.val_fraction));
  std::vector<std::size_t> quota(k + 1, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 1; c <= k; ++c) {
    const double exact = static_cast<double>(counts[c]) * spec.val_fraction;
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    if (counts[c] > 0) remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total_val && i < remainders.size(); ++i, ++assigned) {
    ++quota[remainders[i].second];
  }
  for (std::size_t c = 1; c <= k; ++c) {
    if (counts[c] > 0) quota[c] = std::min(quota[c], counts[c] - 1);
  }

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> train_idx, val_idx;
  std::vector<std::size_t> taken(k + 1, 0);
  for (std::size_t i : order) {
    const std::size_t y = data.label(i);
    if (taken[y] < quota[y]) {
      ++taken[y];
      val_idx.push_back(i);
    } else {
      train_idx.push_back(i);
    }
  }
  return {data.subset(train_idx), data.subset(val_idx)};
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per sample: features..., label. Preceded by a header row.
inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  for (std::size_t j = 0; j < data.dim(); ++j) os << 'x' << j << ',';
  os << "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.feature(i).values()) os << format_double(v) << ',';
    os << data.label(i) << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is, std::size_t k) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("dataset csv: missing header");
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("dataset csv: bad number '" + cell + "'");
      }
    }
    if (row.size() < 2) throw FormatError("dataset csv: row needs features and a label");
    labels.push_back(static_cast<std::size_t>(row.back()));
    row.pop_back();
    features.push_back(Tensor::vector(std::move(row)));
  }
  return Dataset(std::move(features), std::move(labels), k);
}

inline void save_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_dataset_csv(os, data);
}

inline Dataset load_dataset_csv(const std::string& path, std::size_t k) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_dataset_csv(is, k);
}

}  // namespace vrmood

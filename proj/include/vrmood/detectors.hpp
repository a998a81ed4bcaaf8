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

// Out-of-distribution detectors. Every score follows one convention: higher
// means more likely out-of-distribution.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "vrmood/data.hpp"
#include "vrmood/error.hpp"
#include "vrmood/model.hpp"
#include "vrmood/tensor.hpp"
#include "vrmood/vicinal.hpp"

namespace vrmood {

enum class DetectorKind { msp, aux, odin, mahalanobis };

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::msp: return "msp";
    case DetectorKind::aux: return "aux";
    case DetectorKind::odin: return "odin";
    case DetectorKind::mahalanobis: return "mahalanobis";
  }
  return "?";
}

inline DetectorKind parse_detector(const std::string& s) {
  if (s == "msp") return DetectorKind::msp;
  if (s == "aux") return DetectorKind::aux;
  if (s == "odin") return DetectorKind::odin;
  if (s == "mahalanobis") return DetectorKind::mahalanobis;
  throw ConfigError("unknown detector '" + s + "'");
}

struct OodScore {
  double value = 0.0;
  DetectorKind kind = DetectorKind::msp;
};

/// Accumulates MACs and the largest modeled activation footprint over the
/// tapes a scoring call uses.
struct CostProbe {
  std::uint64_t macs = 0;
  std::size_t peak_activation_bytes = 0;

  void absorb(const Tape& tape) {
    macs += tape.mac_count();
    peak_activation_bytes = std::max(peak_activation_bytes, tape.peak_live_bytes());
  }
};

struct OdinParams {
  double temperature = 1000.0;
  double epsilon = 0.0014;

  void validate() const {
    if (!(temperature > 0.0)) throw ConfigError("ODIN temperature must be positive");
    if (!(epsilon >= 0.0)) throw ConfigError("ODIN epsilon must be nonnegative");
  }
};

namespace detail {

/// 1 - max softmax(logits[0..k) / temperature).
inline double inverse_confidence(std::span<const double> logits, std::size_t k, double temperature) {
  const auto p = softmax(logits.first(k), temperature);
  return 1.0 - *std::max_element(p.begin(), p.end());
}

}  // namespace detail

/// Baseline score: 1 - max softmax probability over the k in-distribution
/// outputs. An auxiliary output, if present, is left out.
inline OodScore msp_score(const Model& model, const Tensor& x, CostProbe* probe = nullptr) {
  Tape tape;
  const auto out = forward(model, tape, x);
  const double s = detail::inverse_confidence(tape.value(out.logits).values(), model.k(), 1.0);
  if (probe) probe->absorb(tape);
  return {s, DetectorKind::msp};
}

/// Softmax probability of the auxiliary class over all k+1 outputs.
inline OodScore aux_score(const Model& model, const Tensor& x, CostProbe* probe = nullptr) {
  if (!model.has_aux()) throw ConfigError("aux_score needs a model with an auxiliary class");
  Tape tape;
  const auto out = forward(model, tape, x);
  const auto p = softmax(tape.value(out.logits).values());
  if (probe) probe->absorb(tape);
  return {p[model.k()], DetectorKind::aux};
}

/// ODIN: perturb the input against the gradient of the temperature-scaled
/// log-softmax of the predicted class, then score 1 - max tempered softmax.
///   x' = x - epsilon * sign(-d log S_yhat(x; T) / dx)
inline OodScore odin_score(const Model& model, const Tensor& x, const OdinParams& params,
                           CostProbe* probe = nullptr) {
  params.validate();
  if (!x.all_finite()) throw NumericError("odin_score: non-finite input");
  const std::size_t k = model.k();
  Tensor perturbed = x;
  {
    Tape tape;
    const auto out = forward(model, tape, x);
    const std::size_t predicted = argmax(tape.value(out.logits).values(), k);
    const Var in_dist = slice(tape, out.logits, 0, k);
    const Var log_probs = log_softmax(tape, in_dist, params.temperature);
    // loss = -log S_yhat, so sign(-grad log S) == sign(grad loss).
    const Var loss = cross_entropy(tape, log_probs, one_hot(predicted, k));
    const GradientMap grads = backward(tape, loss);
    const Tensor& g = grads.at(out.input);
    if (!g.all_finite()) throw NumericError("odin_score: non-finite input gradient");
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
      const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
      perturbed[i] = x[i] - params.epsilon * sign;
    }
    if (probe) probe->absorb(tape);
  }
  Tape tape;
  const auto out = forward(model, tape, perturbed);
  const double s = detail::inverse_confidence(tape.value(out.logits).values(), k, params.temperature);
  if (probe) probe->absorb(tape);
  return {s, DetectorKind::odin};
}

/// Class-conditional Gaussians with a tied covariance over penultimate
/// features.
struct MahalanobisStats {
  std::vector<std::vector<double>> class_means;
  /// Tied covariance (1/N) sum_c sum_{x in c} (f(x) - mu_c)(f(x) - mu_c)^T.
  Tensor covariance;
  /// (covariance + shrinkage * I)^-1, symmetrized.
  Tensor precision;
  double shrinkage = 1e-6;

  std::size_t feature_dim() const noexcept { return precision.rank() == 2 ? precision.shape()[0] : 0; }
};

inline Tensor penultimate_features(const Model& model, const Tensor& x, CostProbe* probe = nullptr) {
  Tape tape;
  const auto out = forward(model, tape, x);
  Tensor f = tape.value(out.penultimate);
  if (probe) probe->absorb(tape);
  return f;
}

/// Builds stats from already-extracted features (labels in [1, k]).
inline MahalanobisStats fit_mahalanobis_features(const std::vector<Tensor>& features,
                                                 const std::vector<std::size_t>& labels,
                                                 std::size_t k, double shrinkage = 1e-6) {
  if (!(shrinkage >= 0.0)) throw ConfigError("shrinkage must be nonnegative");
  if (features.empty()) throw DegenerateInputError("fit_mahalanobis: no samples");
  const std::size_t d = features.front().size();
  std::vector<std::size_t> counts(k, 0);
  std::vector<std::vector<double>> means(k, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::size_t c = labels[i] - 1;
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) means[c][j] += features[i][j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] < 2) {
      throw DegenerateInputError("fit_mahalanobis: class " + std::to_string(c + 1) +
                                 " has fewer than 2 samples");
    }
    for (double& m : means[c]) m /= static_cast<double>(counts[c]);
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd centered(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& mu = means[labels[i] - 1];
    for (std::size_t j = 0; j < d; ++j) centered(static_cast<Eigen::Index>(j)) = features[i][j] - mu[j];
    cov.noalias() += centered * centered.transpose();
  }
  cov /= static_cast<double>(features.size());

  Eigen::MatrixXd regularized = cov;
  regularized.diagonal().array() += shrinkage;
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  const double scale = std::max(1.0, regularized.diagonal().cwiseAbs().maxCoeff());
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const Eigen::MatrixXd L = llt.matrixL();
    for (Eigen::Index i = 0; i < L.rows(); ++i) {
      if (!(L(i, i) * L(i, i) > 1e-14 * scale)) ok = false;
    }
  }
  if (!ok) {
    throw NumericError("fit_mahalanobis: covariance is singular at shrinkage " +
                       std::to_string(shrinkage) + "; use a larger shrinkage");
  }
  Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(regularized.rows(), regularized.cols()));
  precision = 0.5 * (precision + precision.transpose()).eval();

  MahalanobisStats stats;
  stats.class_means = std::move(means);
  stats.shrinkage = shrinkage;
  stats.covariance = Tensor::zeros({d, d});
  stats.precision = Tensor::zeros({d, d});
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      stats.covariance.at(r, c) = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      stats.precision.at(r, c) = precision(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return stats;
}

/// Fits class means and the tied precision on the penultimate features of
/// the in-distribution training set.
inline MahalanobisStats fit_mahalanobis(const Model& model, const Dataset& d_train_in,
                                        double shrinkage = 1e-6) {
  if (d_train_in.k() != model.k()) throw ConfigError("fit_mahalanobis: class count mismatch");
  std::vector<Tensor> features;
  features.reserve(d_train_in.size());
  for (const auto& x : d_train_in.features()) features.push_back(penultimate_features(model, x));
  return fit_mahalanobis_features(features, d_train_in.labels(), model.k(), shrinkage);
}

/// min_c (f - mu_c)^T P (f - mu_c) for a feature vector f. Costs k*d^2 + k*d
/// MACs, charged to `probe`.
inline double mahalanobis_distance(const MahalanobisStats& stats, std::span<const double> f,
                                   CostProbe* probe = nullptr) {
  const std::size_t d = stats.feature_dim();
  if (f.size() != d) {
    throw DimensionError("mahalanobis: feature dimension " + std::to_string(f.size()) +
                         " differs from fitted dimension " + std::to_string(d));
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> diff(d);
  for (const auto& mu : stats.class_means) {
    for (std::size_t j = 0; j < d; ++j) diff[j] = f[j] - mu[j];
    double q = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < d; ++c) row += stats.precision.at(r, c) * diff[c];
      q += diff[r] * row;
    }
    best = std::min(best, q);
  }
  if (probe) probe->macs += stats.class_means.size() * (d * d + d);
  return std::max(best, 0.0);
}

inline OodScore mahalanobis_score(const MahalanobisStats& stats, const Model& model, const Tensor& x,
                                  CostProbe* probe = nullptr) {
  const Tensor f = penultimate_features(model, x, probe);
  return {mahalanobis_distance(stats, f.values(), probe), DetectorKind::mahalanobis};
}

}  // namespace vrmood

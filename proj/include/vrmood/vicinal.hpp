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
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "vrmood/data.hpp"
#include "vrmood/error.hpp"
#include "vrmood/tensor.hpp"

namespace vrmood {

using Rng = std::mt19937_64;

enum class NoiseKind { none, uniform, gaussian };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::gaussian: return "gaussian";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "uniform") return NoiseKind::uniform;
  if (s == "gaussian") return NoiseKind::gaussian;
  throw ConfigError("unknown noise kind '" + s + "'");
}

struct LambdaUniform {};
struct LambdaBeta {
  double alpha = 1.0;
};
struct LambdaFixed {
  double lambda = 1.0;
};
using LambdaDist = std::variant<LambdaUniform, LambdaBeta, LambdaFixed>;

/// How vicinal samples are drawn. Lambda is drawn per sample.
struct MixPolicy {
  LambdaDist lambda_dist = LambdaUniform{};
  /// Probability that an out-of-distribution sample is mixed with fresh noise
  /// instead of another out-of-distribution sample.
  double p_noise = 0.5;
  NoiseKind noise_kind = NoiseKind::gaussian;

  void validate() const {
    if (!(p_noise >= 0.0 && p_noise <= 1.0)) throw ConfigError("p_noise must lie in [0, 1]");
    if (const auto* b = std::get_if<LambdaBeta>(&lambda_dist); b && !(b->alpha > 0.0)) {
      throw ConfigError("beta alpha must be positive");
    }
    if (const auto* f = std::get_if<LambdaFixed>(&lambda_dist);
        f && !(f->lambda >= 0.0 && f->lambda <= 1.0)) {
      throw ConfigError("fixed lambda must lie in [0, 1]");
    }
  }
};

inline double draw_lambda(const LambdaDist& dist, Rng& rng) {
  return std::visit(
      [&rng](const auto& d) -> double {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, LambdaFixed>) {
          return d.lambda;
        } else if constexpr (std::is_same_v<D, LambdaUniform>) {
          return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        } else {
          std::gamma_distribution<double> g(d.alpha, 1.0);
          const double a = g(rng);
          const double b = g(rng);
          return a + b > 0.0 ? a / (a + b) : 0.5;
        }
      },
      dist);
}

/// Per-dimension noise model. Gaussian uses mean/std; uniform uses low/high.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<double> low;
  std::vector<double> high;

  std::size_t dim() const noexcept { return kind == NoiseKind::gaussian ? mean.size() : low.size(); }

  void validate() const {
    if (kind == NoiseKind::gaussian) {
      if (mean.size() != std.size()) throw ConfigError("noise mean/std length mismatch");
      for (double s : std) {
        if (!(s > 0.0)) throw ConfigError("gaussian noise std must be positive");
      }
    } else if (kind == NoiseKind::uniform) {
      if (low.size() != high.size()) throw ConfigError("noise low/high length mismatch");
      for (std::size_t j = 0; j < low.size(); ++j) {
        if (!(low[j] < high[j])) throw ConfigError("uniform noise needs low < high");
      }
    } else {
      throw ConfigError("noise spec kind must be gaussian or uniform");
    }
  }

  Tensor sample(Rng& rng) const {
    std::vector<double> x(dim());
    if (kind == NoiseKind::gaussian) {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = mean[j] + std[j] * normal(rng);
    } else {
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = low[j] + (high[j] - low[j]) * unit(rng);
    }
    return Tensor::vector(std::move(x));
  }
};

inline constexpr double kMinNoiseStd = 1e-8;

/// Noise matched to a dataset: gaussian takes the per-dimension population
/// mean and std (std clamped to at least 1e-8); uniform spans the
/// per-dimension [min, max] (a constant dimension is widened by 1e-8).
inline NoiseSpec noise_like(const Dataset& data, NoiseKind kind) {
  if (data.empty()) throw DegenerateInputError("noise_like on an empty dataset");
  NoiseSpec spec;
  spec.kind = kind;
  if (kind == NoiseKind::gaussian) {
    spec.mean = data.stats().mean;
    spec.std = data.stats().std;
    for (double& s : spec.std) s = std::max(s, kMinNoiseStd);
  } else if (kind == NoiseKind::uniform) {
    const std::size_t d = data.dim();
    spec.low.assign(d, std::numeric_limits<double>::infinity());
    spec.high.assign(d, -std::numeric_limits<double>::infinity());
    for (const auto& f : data.features()) {
      for (std::size_t j = 0; j < d; ++j) {
        spec.low[j] = std::min(spec.low[j], f[j]);
        spec.high[j] = std::max(spec.high[j], f[j]);
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!(spec.low[j] < spec.high[j])) spec.high[j] = spec.low[j] + kMinNoiseStd;
    }
  } else {
    throw ConfigError("noise_like needs kind gaussian or uniform");
  }
  return spec;
}

/// Hard label of width `width` with all mass on 0-based `index`.
inline Tensor one_hot(std::size_t index, std::size_t width) {
  Tensor t = Tensor::zeros({width});
  t[index] = 1.0;
  return t;
}

struct MixedSample {
  Tensor x;
  Tensor y;
};

/// lambda * (x_i, y_i) + (1 - lambda) * (x_j, y_j).
inline MixedSample mixup(const Tensor& x_i, const Tensor& y_i, const Tensor& x_j,
                         const Tensor& y_j, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("mixup lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (x_i.shape() != x_j.shape() || y_i.shape() != y_j.shape()) {
    throw DimensionError("mixup: shape mismatch " + to_string(x_i.shape()) + "/" +
                         to_string(x_j.shape()) + ", labels " + to_string(y_i.shape()) + "/" +
                         to_string(y_j.shape()));
  }
  const double mu = 1.0 - lambda;
  // Equal endpoints stay bit-identical and results never leave the segment
  // through rounding.
  auto blend = [lambda, mu](double a, double b) {
    if (a == b) return a;
    return std::clamp(lambda * a + mu * b, std::min(a, b), std::max(a, b));
  };
  Tensor x = x_i;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = blend(x_i[i], x_j[i]);
  Tensor y = y_i;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = blend(y_i[i], y_j[i]);
  return {std::move(x), std::move(y)};
}

/// Uniformly drawn member (possibly `index` itself) of the class of sample
/// `index`.
inline std::size_t same_class_partner(const Dataset& data, std::size_t index, Rng& rng) {
  if (index >= data.size()) throw DegenerateInputError("same_class_partner: index out of range");
  const std::size_t c = data.label(index);
  const auto members = data.indices_of_class(c);
  if (members.empty()) throw DegenerateInputError("same_class_partner: empty class");
  std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
  return members[pick(rng)];
}

/// Precomputed class membership for repeated partner draws.
class ClassIndex {
 public:
  explicit ClassIndex(const Dataset& data) : members_(data.k() + 1) {
    for (std::size_t i = 0; i < data.size(); ++i) members_[data.label(i)].push_back(i);
  }

  std::size_t partner(std::size_t label, Rng& rng) const {
    const auto& m = members_.at(label);
    if (m.empty()) throw DegenerateInputError("same_class_partner: empty class");
    std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
    return m[pick(rng)];
  }

 private:
  std::vector<std::vector<std::size_t>> members_;
};

/// Out-of-distribution vicinal sample labeled as auxiliary class k+1 (0-based
/// output index k). With probability p_noise the partner is a fresh draw
/// from `noise`; otherwise it is a uniform draw from `d_out`. With
/// noise_kind == none the partner always comes from `d_out`.
inline MixedSample ood_augment(const Tensor& x_out, const Dataset& d_out, const NoiseSpec* noise,
                               const MixPolicy& policy, Rng& rng, std::size_t k) {
  if (d_out.empty()) throw DegenerateInputError("ood_augment: empty out-of-distribution set");
  const double lambda = draw_lambda(policy.lambda_dist, rng);
  bool use_noise = false;
  if (policy.noise_kind != NoiseKind::none) {
    if (noise == nullptr) throw ConfigError("ood_augment: noise policy without a noise spec");
    use_noise = std::bernoulli_distribution(policy.p_noise)(rng);
  }
  Tensor partner;
  if (use_noise) {
    partner = noise->sample(rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, d_out.size() - 1);
    partner = d_out.feature(pick(rng));
  }
  const Tensor label = one_hot(k, k + 1);
  MixedSample mixed = mixup(x_out, label, partner, label, lambda);
  return mixed;
}

}  // namespace vrmood

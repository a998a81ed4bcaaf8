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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vrmood/error.hpp"
#include "vrmood/tensor.hpp"

namespace vrmood {

/// Shape of a dense classifier over `k` in-distribution classes. With
/// `aux_class` set, one extra output (class k+1) scores out-of-distribution
/// inputs.
struct ModelConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden;
  std::size_t k = 2;
  bool aux_class = false;
  std::uint64_t seed = 0;

  std::size_t output_width() const noexcept { return k + (aux_class ? 1 : 0); }

  void validate() const {
    if (input_dim == 0) throw ConfigError("model input_dim must be positive");
    if (k == 0) throw ConfigError("model needs at least one class");
    for (std::size_t h : hidden) {
      if (h == 0) throw ConfigError("model hidden layer has zero width");
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// y = x * weight + bias, weight stored as (in x out).
struct DenseLayer {
  Tensor weight;
  Tensor bias;
};

class Model {
 public:
  Model() = default;

  Model(ModelConfig config, std::vector<DenseLayer> layers)
      : config_(std::move(config)), layers_(std::move(layers)) {
    config_.validate();
    std::size_t in = config_.input_dim;
    const std::size_t depth = config_.hidden.size() + 1;
    if (layers_.size() != depth) {
      throw DimensionError("model expects " + std::to_string(depth) + " layers, got " +
                           std::to_string(layers_.size()));
    }
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t out = l + 1 < depth ? config_.hidden[l] : config_.output_width();
      if (layers_[l].weight.shape() != Shape{in, out} || layers_[l].bias.shape() != Shape{out}) {
        throw DimensionError("layer " + std::to_string(l) + " has shapes " +
                             to_string(layers_[l].weight.shape()) + ", " +
                             to_string(layers_[l].bias.shape()) + "; expected [" +
                             std::to_string(in) + "x" + std::to_string(out) + "], [" +
                             std::to_string(out) + "]");
      }
      in = out;
    }
  }

  /// He-normal weights (std = sqrt(2 / fan_in)) and zero biases, seeded by
  /// config.seed.
  static Model init(const ModelConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::vector<DenseLayer> layers;
    std::size_t in = config.input_dim;
    const std::size_t depth = config.hidden.size() + 1;
    for (std::size_t l = 0; l < depth; ++l) {
      const std::size_t out = l + 1 < depth ? config.hidden[l] : config.output_width();
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
      Tensor w = Tensor::zeros({in, out});
      for (double& v : w.values()) v = normal(rng);
      layers.push_back({std::move(w), Tensor::zeros({out})});
      in = out;
    }
    return Model(config, std::move(layers));
  }

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

  std::size_t k() const noexcept { return config_.k; }
  bool has_aux() const noexcept { return config_.aux_class; }
  std::size_t input_dim() const noexcept { return config_.input_dim; }
  std::size_t output_width() const noexcept { return config_.output_width(); }

  /// Width of the penultimate representation (last hidden layer, or the
  /// input itself for a single linear layer).
  std::size_t feature_dim() const noexcept {
    return config_.hidden.empty() ? config_.input_dim : config_.hidden.back();
  }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool all_finite() const noexcept {
    for (const auto& l : layers_) {
      if (!l.weight.all_finite() || !l.bias.all_finite()) return false;
    }
    return true;
  }

  /// Copy with the auxiliary output column dropped.
  Model without_aux() const {
    if (!has_aux()) return *this;
    ModelConfig cfg = config_;
    cfg.aux_class = false;
    std::vector<DenseLayer> layers = layers_;
    resize_output(layers.back(), cfg.output_width());
    return Model(cfg, std::move(layers));
  }

  /// Copy with an auxiliary output added (zero-initialized) if absent.
  Model with_aux() const {
    if (has_aux()) return *this;
    ModelConfig cfg = config_;
    cfg.aux_class = true;
    std::vector<DenseLayer> layers = layers_;
    resize_output(layers.back(), cfg.output_width());
    return Model(cfg, std::move(layers));
  }

  friend bool operator==(const Model& a, const Model& b) {
    if (!(a.config_ == b.config_) || a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (!(a.layers_[i].weight == b.layers_[i].weight) ||
          !(a.layers_[i].bias == b.layers_[i].bias)) {
        return false;
      }
    }
    return true;
  }

 private:
  static void resize_output(DenseLayer& layer, std::size_t out) {
    const std::size_t in = layer.weight.shape()[0];
    const std::size_t old = layer.weight.shape()[1];
    Tensor w = Tensor::zeros({in, out});
    Tensor b = Tensor::zeros({out});
    const std::size_t keep = std::min(old, out);
    for (std::size_t r = 0; r < in; ++r) {
      for (std::size_t c = 0; c < keep; ++c) w.at(r, c) = layer.weight.at(r, c);
    }
    for (std::size_t c = 0; c < keep; ++c) b[c] = layer.bias[c];
    layer.weight = std::move(w);
    layer.bias = std::move(b);
  }

  ModelConfig config_;
  std::vector<DenseLayer> layers_;
};

/// Model parameters recorded on a tape, one (weight, bias) pair per layer.
struct BoundModel {
  std::vector<std::pair<Var, Var>> layers;
};

inline BoundModel bind(const Model& model, Tape& tape) {
  BoundModel bound;
  for (const auto& l : model.layers()) {
    bound.layers.emplace_back(tape.parameter(l.weight), tape.parameter(l.bias));
  }
  return bound;
}

struct ForwardResult {
  Var input;
  Var logits;
  /// Post-ReLU activations of the last hidden layer.
  Var penultimate;
  BoundModel params;
};

inline ForwardResult forward(const BoundModel& params, Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  const Tensor& w0 = tape.value(params.layers.front().first);
  if (xv.rank() != 1 || xv.size() != w0.shape()[0]) {
    throw DimensionError("forward: input shape " + to_string(xv.shape()) +
                         " does not match input_dim " + std::to_string(w0.shape()[0]));
  }
  Var h = x;
  Var penultimate = x;
  const std::size_t depth = params.layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    h = add(tape, matmul(tape, h, params.layers[l].first), params.layers[l].second);
    if (l + 1 < depth) {
      h = relu(tape, h);
      penultimate = h;
    }
  }
  return ForwardResult{x, h, penultimate, params};
}

inline ForwardResult forward(const Model& model, Tape& tape, const Tensor& x) {
  BoundModel params = bind(model, tape);
  return forward(params, tape, tape.leaf(x));
}

/// Index of the largest entry among the first `count`; ties go to the lowest
/// index.
inline std::size_t argmax(std::span<const double> v, std::size_t count) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < count; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

/// Predicted class in [1, k], or k + 1 for the auxiliary class.
inline std::size_t predict(const Model& model, const Tensor& x) {
  Tape tape;
  const auto result = forward(model, tape, x);
  const Tensor& logits = tape.value(result.logits);
  return argmax(logits.values(), logits.size()) + 1;
}

/// Predicted in-distribution class in [1, k], ignoring the auxiliary output.
inline std::size_t predict_in_distribution(const Model& model, const Tensor& x) {
  Tape tape;
  const auto result = forward(model, tape, x);
  return argmax(tape.value(result.logits).values(), model.k()) + 1;
}

}  // namespace vrmood

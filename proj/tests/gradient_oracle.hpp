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

// Finite-difference oracle for network gradients. The loss is re-evaluated
// with a standalone extended-precision forward pass that shares no code with
// the tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "vrmood/model.hpp"
#include "vrmood/tensor.hpp"
#include "vrmood/trainer.hpp"

namespace vrmood::testing_oracle {

struct Network {
  Model model;
  Tensor x;
  Tensor label;
};

/// One unconstrained draw: 1..max_layers layers of 1..max_units units, a
/// random input and a random soft label.
inline Network random_network_draw(std::mt19937_64& rng, std::size_t max_layers, std::size_t max_units) {
  std::uniform_int_distribution<std::size_t> layers(1, max_layers);
  std::uniform_int_distribution<std::size_t> units(1, max_units);
  std::uniform_int_distribution<std::size_t> classes(2, 6);
  ModelConfig cfg;
  cfg.input_dim = units(rng);
  const std::size_t depth = layers(rng);
  for (std::size_t l = 1; l < depth; ++l) cfg.hidden.push_back(units(rng));
  cfg.k = classes(rng);
  cfg.aux_class = rng() % 2 == 0;
  cfg.seed = rng();
  Model model = Model::init(cfg);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& l : model.mutable_layers()) {
    for (double& b : l.bias.values()) b = 0.1 * u(rng);
  }
  std::vector<double> x(cfg.input_dim);
  for (double& v : x) v = u(rng);
  std::vector<double> y(cfg.output_width());
  double s = 0;
  for (double& v : y) {
    v = std::abs(u(rng)) + 0.05;
    s += v;
  }
  for (double& v : y) v /= s;
  return {std::move(model), Tensor::vector(std::move(x)), Tensor::vector(std::move(y))};
}

/// Smallest |pre-activation| over hidden units: central differences are only
/// meaningful away from ReLU kinks.
inline double min_hidden_margin(const Model& model, const Tensor& x) {
  std::vector<double> h(x.data().begin(), x.data().end());
  double margin = 1e300;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    std::vector<double> next(w.shape()[1]);
    for (std::size_t j = 0; j < next.size(); ++j) {
      double acc = layers[l].bias[j];
      for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * w.at(i, j);
      margin = std::min(margin, std::abs(acc));
      next[j] = std::max(acc, 0.0);
    }
    h = std::move(next);
  }
  return margin;
}

/// Random dense net with 1..max_layers layers of 1..max_units units, a random
/// input and a random soft label. Draws whose hidden pre-activations come
/// within 1e-3 of a ReLU kink are redrawn.
inline Network random_network(std::mt19937_64& rng, std::size_t max_layers, std::size_t max_units) {
  for (;;) {
    auto net = random_network_draw(rng, max_layers, max_units);
    if (min_hidden_margin(net.model, net.x) > 1e-3) return net;
  }
}

/// Logits of a dense ReLU stack with every quantity in long double.
inline std::vector<long double> reference_logits(const Model& model, const Tensor& x) {
  std::vector<long double> h(x.data().begin(), x.data().end());
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    const std::size_t in = w.shape()[0];
    const std::size_t out = w.shape()[1];
    std::vector<long double> next(out);
    for (std::size_t j = 0; j < out; ++j) {
      long double acc = layers[l].bias[j];
      for (std::size_t i = 0; i < in; ++i) acc += h[i] * static_cast<long double>(w.at(i, j));
      next[j] = (l + 1 < layers.size() && acc < 0) ? 0.0L : acc;
    }
    h = std::move(next);
  }
  return h;
}

/// Naive softmax of the first `count` entries divided by `temperature`.
inline std::vector<long double> reference_softmax(const std::vector<long double>& z, std::size_t count,
                                                  long double temperature = 1.0L) {
  const long double mx = *std::max_element(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(count));
  std::vector<long double> p(count);
  long double s = 0;
  for (std::size_t i = 0; i < count; ++i) s += p[i] = std::exp((z[i] - mx) / temperature);
  for (auto& v : p) v /= s;
  return p;
}

/// Cross-entropy loss with every quantity in long double.
inline long double reference_loss(const Model& model, const Tensor& x, const Tensor& label) {
  const auto h = reference_logits(model, x);
  const long double mx = *std::max_element(h.begin(), h.end());
  long double z = 0;
  for (long double v : h) z += std::exp(v - mx);
  const long double lse = mx + std::log(z);
  long double loss = 0;
  for (std::size_t i = 0; i < h.size(); ++i) loss -= static_cast<long double>(label[i]) * (h[i] - lse);
  return loss;
}

struct GradientReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Compares tape gradients (all parameters and the input) with central
/// differences, h = 1e-5.
inline GradientReport check_gradients(const Network& net, double h = 1e-5) {
  Tape tape;
  const BoundModel bound = bind(net.model, tape);
  const auto out = forward(bound, tape, tape.leaf(net.x));
  const Var loss = cross_entropy(tape, log_softmax(tape, out.logits), net.label);
  const GradientMap grads = backward(tape, loss);
  const auto param_grads = parameter_gradients(grads, bound);

  GradientReport report;
  Model probe = net.model;
  auto params = parameters(probe);
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double orig = (*params[p])[i];
      (*params[p])[i] = orig + h;
      const long double up = reference_loss(probe, net.x, net.label);
      (*params[p])[i] = orig - h;
      const long double down = reference_loss(probe, net.x, net.label);
      (*params[p])[i] = orig;
      const double fd = static_cast<double>((up - down) / (2.0L * h));
      report.max_rel_error = std::max(report.max_rel_error, rel_error(param_grads[p][i], fd));
      ++report.checked;
    }
  }
  Tensor x = net.x;
  const Tensor& gx = grads.at(out.input);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const long double up = reference_loss(net.model, x, net.label);
    x[i] = orig - h;
    const long double down = reference_loss(net.model, x, net.label);
    x[i] = orig;
    const double fd = static_cast<double>((up - down) / (2.0L * h));
    report.max_rel_error = std::max(report.max_rel_error, rel_error(gx[i], fd));
    ++report.checked;
  }
  return report;
}

}  // namespace vrmood::testing_oracle

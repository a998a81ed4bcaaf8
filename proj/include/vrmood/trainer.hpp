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
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vrmood/checkpoint.hpp"
#include "vrmood/data.hpp"
#include "vrmood/error.hpp"
#include "vrmood/model.hpp"
#include "vrmood/tensor.hpp"
#include "vrmood/vicinal.hpp"

namespace vrmood {

/// splitmix64 finalizer over (seed, stream): independent seeds for the
/// separate random streams of one run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random streams used by train(). The shuffle stream is seeded with the
/// run seed itself.
enum class Stream : std::uint64_t { ood_pick = 1, mixing = 2 };

enum class TrainMode { erm, vrm };

inline std::string to_string(TrainMode m) { return m == TrainMode::erm ? "ERM" : "VRM"; }

struct TrainConfig {
  double lr0 = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::vector<double> milestones{0.6, 0.8};
  double lr_factor = 0.1;
  std::uint64_t seed = 0;
  MixPolicy mix_policy;
  /// Share of each minibatch drawn from the out-of-distribution source.
  double ood_batch_fraction = 1.0 / 3.0;

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr_factor > 0.0)) throw ConfigError("lr_factor must be positive");
    if (!(ood_batch_fraction >= 0.0 && ood_batch_fraction < 1.0)) {
      throw ConfigError("ood_batch_fraction must lie in [0, 1)");
    }
    double prev = 0.0;
    for (double m : milestones) {
      if (!(m > prev && m < 1.0)) throw ConfigError("milestones must be strictly increasing in (0, 1)");
      prev = m;
    }
    mix_policy.validate();
  }
};

/// Learning rate for a 0-based epoch: lr0 scaled by lr_factor once for each
/// milestone m with epoch >= ceil(m * epochs).
inline double lr_at(const TrainConfig& config, std::size_t epoch) {
  if (epoch >= config.epochs) {
    throw DomainError("epoch " + std::to_string(epoch) + " outside [0, " +
                      std::to_string(config.epochs) + ")");
  }
  double lr = config.lr0;
  for (double m : config.milestones) {
    // The epsilon absorbs representation error in m * epochs (0.6 * 100).
    const double boundary = std::ceil(m * static_cast<double>(config.epochs) - 1e-9);
    if (static_cast<double>(epoch) >= boundary) lr *= config.lr_factor;
  }
  return lr;
}

/// Momentum buffers, one per parameter tensor in (W0, b0, W1, b1, ...)
/// order.
struct SgdState {
  std::vector<Tensor> velocity;
};

/// Parameter tensors of a model in (W0, b0, W1, b1, ...) order.
inline std::vector<Tensor*> parameters(Model& model) {
  std::vector<Tensor*> out;
  for (auto& l : model.mutable_layers()) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

/// Gradients for every bound parameter, in (W0, b0, W1, b1, ...) order.
inline std::vector<Tensor> parameter_gradients(const GradientMap& grads, const BoundModel& bound) {
  std::vector<Tensor> out;
  for (const auto& [w, b] : bound.layers) {
    if (!grads.contains(w) || !grads.contains(b)) {
      throw Error("missing gradient for a model parameter");
    }
    out.push_back(grads.at(w));
    out.push_back(grads.at(b));
  }
  return out;
}

/// One SGD step with coupled weight decay:
///   g' = g + weight_decay * w;  v = momentum * v + g';  w -= lr * v
inline void sgd_step(Model& model, std::span<const Tensor> grads, SgdState& state, double lr,
                     double momentum, double weight_decay) {
  auto params = parameters(model);
  if (grads.size() != params.size()) {
    throw Error("missing gradient: " + std::to_string(grads.size()) + " gradients for " +
                std::to_string(params.size()) + " parameters");
  }
  if (state.velocity.empty()) {
    for (const Tensor* p : params) state.velocity.push_back(Tensor::zeros(p->shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i];
    const Tensor& g = grads[i];
    Tensor& v = state.velocity[i];
    if (g.shape() != w.shape() || v.shape() != w.shape()) {
      throw DimensionError("sgd_step: gradient shape " + to_string(g.shape()) +
                           " does not match parameter " + to_string(w.shape()));
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + weight_decay * w[j];
      v[j] = momentum * v[j] + gj;
      w[j] -= lr * v[j];
    }
  }
}

using TrainingSample = MixedSample;

/// Mean cross-entropy of `samples` recorded on `tape`.
inline Var batch_loss(const BoundModel& bound, Tape& tape, std::span<const TrainingSample> samples) {
  if (samples.empty()) throw DegenerateInputError("empty batch");
  std::optional<Var> total;
  for (const auto& s : samples) {
    const auto out = forward(bound, tape, tape.leaf(s.x));
    const Var loss = cross_entropy(tape, log_softmax(tape, out.logits), s.y);
    total = total ? add(tape, *total, loss) : loss;
  }
  return scale(tape, *total, 1.0 / static_cast<double>(samples.size()));
}

inline double mean_loss(const Model& model, std::span<const TrainingSample> samples) {
  Tape tape;
  const BoundModel bound = bind(model, tape);
  return tape.value(batch_loss(bound, tape, samples)).item();
}

/// In-distribution indices plus raw out-of-distribution inputs of one
/// minibatch.
struct Batch {
  std::vector<std::size_t> in_indices;
  std::vector<Tensor> ood;
};

/// Raw samples with hard labels over the model's outputs; OoD inputs get the
/// auxiliary label.
inline std::vector<TrainingSample> erm_samples(const Batch& batch, const Dataset& d_in,
                                               std::size_t width) {
  std::vector<TrainingSample> out;
  for (std::size_t i : batch.in_indices) {
    out.push_back({d_in.feature(i), one_hot(d_in.label(i) - 1, width)});
  }
  for (const auto& x : batch.ood) out.push_back({x, one_hot(d_in.k(), width)});
  return out;
}

/// Vicinal counterparts of a batch: same-class mixup for in-distribution
/// samples, ood_augment for OoD samples. Without an OoD dataset the partner
/// of an OoD input is always a fresh noise draw.
inline std::vector<TrainingSample> vicinal_samples(const Batch& batch, const Dataset& d_in,
                                                   const ClassIndex& classes, const Dataset* d_out,
                                                   const NoiseSpec* noise, const MixPolicy& policy,
                                                   Rng& rng, std::size_t width) {
  std::vector<TrainingSample> out;
  for (std::size_t i : batch.in_indices) {
    const double lambda = draw_lambda(policy.lambda_dist, rng);
    const std::size_t j = classes.partner(d_in.label(i), rng);
    const Tensor y = one_hot(d_in.label(i) - 1, width);
    out.push_back(mixup(d_in.feature(i), y, d_in.feature(j), y, lambda));
  }
  const std::size_t k = d_in.k();
  for (const auto& x : batch.ood) {
    if (d_out != nullptr && !d_out->empty()) {
      out.push_back(ood_augment(x, *d_out, noise, policy, rng, k));
    } else {
      if (noise == nullptr) throw ConfigError("OoD samples need an OoD dataset or noise");
      const double lambda = draw_lambda(policy.lambda_dist, rng);
      const Tensor y = one_hot(k, k + 1);
      out.push_back(mixup(x, y, noise->sample(rng), y, lambda));
    }
  }
  return out;
}

/// Mean loss over raw samples.
inline double empirical_risk(const Model& model, const Batch& batch, const Dataset& d_in) {
  if (batch.in_indices.empty() && batch.ood.empty()) throw DegenerateInputError("empty batch");
  if (!batch.ood.empty() && !model.has_aux()) {
    throw ConfigError("OoD samples need a model with an auxiliary class");
  }
  return mean_loss(model, erm_samples(batch, d_in, model.output_width()));
}

/// Mean loss over the vicinal batch.
inline double vicinal_risk(const Model& model, const Batch& batch, const Dataset& d_in,
                           const Dataset* d_out, const NoiseSpec* noise, const MixPolicy& policy,
                           Rng& rng) {
  if (batch.in_indices.empty() && batch.ood.empty()) throw DegenerateInputError("empty batch");
  if (!batch.ood.empty() && !model.has_aux()) {
    throw ConfigError("OoD samples need a model with an auxiliary class");
  }
  const ClassIndex classes(d_in);
  return mean_loss(model, vicinal_samples(batch, d_in, classes, d_out, noise, policy, rng,
                                          model.output_width()));
}

/// In-distribution classification accuracy; the auxiliary output is ignored.
inline double accuracy(const Model& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict_in_distribution(model, data.feature(i)) == data.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct Checkpoint {
  Model model;
  /// -1 when no epoch ran.
  std::int64_t epoch = -1;
  double val_accuracy = 0.0;

  CheckpointMeta meta() const { return {epoch, val_accuracy}; }
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
};

/// Where auxiliary-class training inputs come from.
struct OodSource {
  const Dataset* data = nullptr;
  /// Noise matched to the training set; the policy's noise_kind picks it.
  bool use_noise = true;
};

/// Trains `model` and returns the best-validation snapshot plus per-epoch
/// history. Each minibatch holds round(batch_size * ood_batch_fraction)
/// out-of-distribution inputs when the model has an auxiliary class and an
/// OoD source exists. In ERM mode those inputs are raw (a pure noise draw
/// with probability p_noise); in VRM mode they go through ood_augment.
inline TrainResult train(Model model, const Dataset& d_in, const OodSource& ood, const Dataset& d_val,
                         const TrainConfig& config, TrainMode mode) {
  config.validate();
  if (d_in.empty()) throw DegenerateInputError("empty training set");
  if (d_in.k() != model.k() || d_in.dim() != model.input_dim()) {
    throw ConfigError("training data (k=" + std::to_string(d_in.k()) + ", dim=" +
                      std::to_string(d_in.dim()) + ") does not match model (k=" +
                      std::to_string(model.k()) + ", dim=" + std::to_string(model.input_dim()) + ")");
  }
  const bool have_out = ood.data != nullptr && !ood.data->empty();
  if (have_out && !model.has_aux()) {
    throw ConfigError("OoD training data supplied but the model has no auxiliary class");
  }
  if (have_out && ood.data->dim() != d_in.dim()) {
    throw ConfigError("OoD data dimension differs from in-distribution data");
  }
  const MixPolicy& policy = config.mix_policy;
  std::optional<NoiseSpec> noise;
  if (model.has_aux() && ood.use_noise && policy.noise_kind != NoiseKind::none) {
    noise = noise_like(d_in, policy.noise_kind);
  }
  const bool ood_slots = model.has_aux() && (have_out || noise);
  const std::size_t n_ood =
      ood_slots ? static_cast<std::size_t>(std::llround(static_cast<double>(config.batch_size) *
                                                        config.ood_batch_fraction))
                : 0;
  const std::size_t n_in = std::max<std::size_t>(1, config.batch_size - n_ood);
  const std::size_t width = model.output_width();

  Rng shuffle_rng(config.seed);
  Rng ood_rng(derive_seed(config.seed, static_cast<std::uint64_t>(Stream::ood_pick)));
  Rng mix_rng(derive_seed(config.seed, static_cast<std::uint64_t>(Stream::mixing)));
  const ClassIndex classes(d_in);

  TrainResult result;
  result.best.model = model;
  result.best.val_accuracy = accuracy(model, d_val);
  SgdState sgd;

  std::vector<std::size_t> order(d_in.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += n_in) {
      Batch batch;
      const std::size_t end = std::min(order.size(), start + n_in);
      batch.in_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                              order.begin() + static_cast<std::ptrdiff_t>(end));
      for (std::size_t s = 0; s < n_ood; ++s) {
        if (have_out) {
          std::uniform_int_distribution<std::size_t> pick(0, ood.data->size() - 1);
          batch.ood.push_back(ood.data->feature(pick(ood_rng)));
        } else {
          batch.ood.push_back(noise->sample(ood_rng));
        }
      }
      std::vector<TrainingSample> samples;
      if (mode == TrainMode::erm) {
        if (have_out && noise && policy.p_noise > 0.0) {
          for (auto& x : batch.ood) {
            if (std::bernoulli_distribution(policy.p_noise)(mix_rng)) x = noise->sample(mix_rng);
          }
        }
        samples = erm_samples(batch, d_in, width);
      } else {
        samples = vicinal_samples(batch, d_in, classes, have_out ? ood.data : nullptr,
                                  noise ? &*noise : nullptr, policy, mix_rng, width);
      }
      Tape tape;
      const BoundModel bound = bind(model, tape);
      const Var loss = batch_loss(bound, tape, samples);
      const GradientMap grads = backward(tape, loss);
      const auto param_grads = parameter_gradients(grads, bound);
      sgd_step(model, param_grads, sgd, lr, config.momentum, config.weight_decay);
      loss_sum += tape.value(loss).item() * static_cast<double>(samples.size());
      loss_count += samples.size();
    }
    if (!model.all_finite()) throw NumericError("training diverged: non-finite parameters");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    rec.val_acc = accuracy(model, d_val);
    rec.lr = lr;
    result.history.push_back(rec);
    // Ties go to the later epoch: separable data saturates validation
    // accuracy long before training converges.
    if (result.best.epoch < 0 || rec.val_acc >= result.best.val_accuracy) {
      result.best.model = model;
      result.best.epoch = static_cast<std::int64_t>(epoch);
      result.best.val_accuracy = rec.val_acc;
    }
  }
  return result;
}

/// epoch,train_loss,val_acc,lr with six decimals.
inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
  os << "epoch,train_loss,val_acc,lr\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", r.epoch, r.train_loss, r.val_acc, r.lr);
    os << buf;
  }
}

}  // namespace vrmood

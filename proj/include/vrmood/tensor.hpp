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
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vrmood/error.hpp"

namespace vrmood {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) is a
/// scalar holding exactly one value.
class Tensor {
 public:
  Tensor() : shape_{0} {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size()) {
      throw DimensionError("tensor shape " + to_string(shape_) + " needs " +
                           std::to_string(shape_size(shape_)) +
                           " values, got " + std::to_string(values_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return filled(std::move(shape), 0.0); }

  static Tensor filled(Shape shape, double v) {
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor(Shape{rows, cols}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool is_scalar() const noexcept { return shape_.empty(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  double at(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
  }
  double& at(std::size_t r, std::size_t c) {
    return values_[r * shape_[1] + c];
  }

  /// Scalar value of a single-element tensor.
  double item() const {
    if (values_.size() != 1) {
      throw DimensionError("item() on tensor of shape " + to_string(shape_));
    }
    return values_[0];
  }

  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Handle to a tensor recorded on a particular Tape.
struct Var {
  std::uint64_t tape = 0;
  std::size_t index = 0;

  friend bool operator==(const Var&, const Var&) = default;
};

class Tape;

/// Gradient of a scalar loss with respect to every tensor recorded on a tape
/// up to (and including) the loss node.
class GradientMap {
 public:
  GradientMap() = default;
  GradientMap(std::uint64_t tape, std::vector<Tensor> grads)
      : tape_(tape), grads_(std::move(grads)) {}

  bool contains(Var v) const noexcept {
    return v.tape == tape_ && v.index < grads_.size();
  }

  const Tensor& at(Var v) const {
    if (!contains(v)) throw Error("gradient requested for unknown tensor");
    return grads_[v.index];
  }
  const Tensor& operator[](Var v) const { return at(v); }

  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::uint64_t tape_ = 0;
  std::vector<Tensor> grads_;
};

/// Records operations for reverse-mode differentiation and counts
/// multiply-accumulate operations.
///
/// MAC convention: matmul of m x k by k x n costs m*k*n forward and 2*m*k*n
/// backward; tensor-by-tensor mul costs one per element forward and two per
/// element backward; multiplying by a constant costs one per element in each
/// direction. Additions, nonlinearities, log-softmax and the label
/// contraction inside cross_entropy cost nothing.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tape&, std::size_t node,
                                        const Tensor& grad,
                                        std::vector<Tensor>& grads)>;

  Tape() : id_(next_id()) {}

  // A tape's identity is part of every Var it hands out.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  std::uint64_t id() const noexcept { return id_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t mac_count() const noexcept { return macs_; }

  /// Accounts for work done outside recorded operations.
  void add_macs(std::uint64_t n) noexcept { macs_ += n; }

  Var leaf(Tensor value) { return push(std::move(value), {}, nullptr, 0, 0, false); }

  /// A leaf holding model weights; excluded from activation memory.
  Var parameter(Tensor value) {
    return push(std::move(value), {}, nullptr, 0, 0, true);
  }

  bool owns(Var v) const noexcept { return v.tape == id_ && v.index < nodes_.size(); }

  const Tensor& value(Var v) const {
    check(v);
    return nodes_[v.index].value;
  }

  const std::vector<std::size_t>& inputs(std::size_t node) const {
    return nodes_[node].inputs;
  }
  const Tensor& value_at(std::size_t node) const { return nodes_[node].value; }

  void check(Var v) const {
    if (!owns(v)) throw Error("tensor is not recorded on this tape");
  }

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn,
             std::uint64_t forward_macs, std::uint64_t backward_macs) {
    return push(std::move(value), std::move(inputs), std::move(fn),
                forward_macs, backward_macs, false);
  }

  /// Modeled peak of simultaneously live activation bytes (8 bytes per
  /// value, parameters excluded). Forward-only tensors are live from creation
  /// until their last consumer. Once a backward pass has run, every
  /// activation up to the loss is retained and one gradient buffer per
  /// recorded tensor (parameters included) is live alongside them.
  std::size_t peak_live_bytes() const {
    const std::size_t n = nodes_.size();
    std::vector<std::size_t> last_use(n);
    for (std::size_t i = 0; i < n; ++i) last_use[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t in : nodes_[i].inputs) last_use[in] = std::max(last_use[in], i);
    }
    std::vector<std::ptrdiff_t> delta(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].parameter) continue;
      const auto bytes = static_cast<std::ptrdiff_t>(nodes_[i].value.size() * sizeof(double));
      delta[i] += bytes;
      delta[last_use[i] + 1] -= bytes;
    }
    std::ptrdiff_t live = 0;
    std::ptrdiff_t peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
      live += delta[i];
      peak = std::max(peak, live);
    }
    std::size_t result = static_cast<std::size_t>(peak);
    if (backward_extent_ > 0) {
      std::size_t retained = 0;
      for (std::size_t i = 0; i < backward_extent_; ++i) {
        const std::size_t bytes = nodes_[i].value.size() * sizeof(double);
        retained += bytes;  // gradient buffer
        if (!nodes_[i].parameter) retained += bytes;
      }
      result = std::max(result, retained);
    }
    return result;
  }

 private:
  friend GradientMap backward(Tape& tape, Var loss);

  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::uint64_t backward_macs = 0;
    bool parameter = false;
  };

  static std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn,
           std::uint64_t forward_macs, std::uint64_t backward_macs,
           bool parameter) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(fn),
                          backward_macs, parameter});
    macs_ += forward_macs;
    return Var{id_, nodes_.size() - 1};
  }

  std::uint64_t id_;
  std::vector<Node> nodes_;
  std::uint64_t macs_ = 0;
  std::size_t backward_extent_ = 0;
};

/// Gradients of the scalar `loss` with respect to every tensor recorded
/// before it. Tensors the loss does not depend on get zero gradients.
inline GradientMap backward(Tape& tape, Var loss) {
  tape.check(loss);
  const auto& nodes = tape.nodes_;
  if (nodes[loss.index].value.size() != 1) {
    throw DimensionError("backward needs a scalar loss, got shape " +
                         to_string(nodes[loss.index].value.shape()));
  }
  const std::size_t n = loss.index + 1;
  std::vector<Tensor> grads;
  grads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) grads.push_back(Tensor::zeros(nodes[i].value.shape()));
  std::vector<char> reached(n, 0);
  reached[loss.index] = 1;
  grads[loss.index][0] = 1.0;

  for (std::size_t i = n; i-- > 0;) {
    if (!reached[i]) continue;
    const auto& node = nodes[i];
    if (!node.backward) continue;
    node.backward(tape, i, grads[i], grads);
    tape.macs_ += node.backward_macs;
    for (std::size_t in : node.inputs) reached[in] = 1;
  }
  tape.backward_extent_ = std::max(tape.backward_extent_, n);
  return GradientMap(tape.id(), std::move(grads));
}

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

enum class Binary { add, sub, mul };

inline Var binary(Tape& tape, Binary kind, Var a, Var b) {
  tape.check(a);
  tape.check(b);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const bool a_scalar = av.is_scalar() && !bv.is_scalar();
  const bool b_scalar = bv.is_scalar() && !av.is_scalar();
  if (!a_scalar && !b_scalar) {
    const char* name = kind == Binary::add ? "add" : kind == Binary::sub ? "sub" : "mul";
    require_same_shape(name, av, bv);
  }
  const Tensor& big = a_scalar ? bv : av;
  Tensor out = Tensor::zeros(big.shape());
  const std::size_t n = out.size();
  auto lhs = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto rhs = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::add: out[i] = lhs(i) + rhs(i); break;
      case Binary::sub: out[i] = lhs(i) - rhs(i); break;
      case Binary::mul: out[i] = lhs(i) * rhs(i); break;
    }
  }
  const std::uint64_t fwd = kind == Binary::mul ? n : 0;
  const std::uint64_t bwd = kind == Binary::mul ? 2 * n : 0;
  auto fn = [kind, a_scalar, b_scalar](const Tape& t, std::size_t node,
                                       const Tensor& g, std::vector<Tensor>& grads) {
    const std::size_t ia = t.inputs(node)[0];
    const std::size_t ib = t.inputs(node)[1];
    const Tensor& x = t.value_at(ia);
    const Tensor& y = t.value_at(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ka = a_scalar ? 0 : i;
      const std::size_t kb = b_scalar ? 0 : i;
      switch (kind) {
        case Binary::add:
          grads[ia][ka] += g[i];
          grads[ib][kb] += g[i];
          break;
        case Binary::sub:
          grads[ia][ka] += g[i];
          grads[ib][kb] -= g[i];
          break;
        case Binary::mul:
          grads[ia][ka] += g[i] * y[kb];
          grads[ib][kb] += g[i] * x[ka];
          break;
      }
    }
  };
  return tape.record(std::move(out), {a.index, b.index}, fn, fwd, bwd);
}

}  // namespace detail

/// Matrix product. A rank-1 left operand of length k is a 1 x k row vector
/// and yields a rank-1 result of length n.
inline Var matmul(Tape& tape, Var a, Var b) {
  tape.check(a);
  tape.check(b);
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  const bool row = av.rank() == 1;
  if ((av.rank() != 1 && av.rank() != 2) || bv.rank() != 2) {
    throw DimensionError("matmul: expected matrices, got " + to_string(av.shape()) +
                         " and " + to_string(bv.shape()));
  }
  const std::size_t m = row ? 1 : av.shape()[0];
  const std::size_t k = row ? av.shape()[0] : av.shape()[1];
  const std::size_t n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(av.shape()) +
                         " x " + to_string(bv.shape()));
  }
  Tensor out = row ? Tensor::zeros({n}) : Tensor::zeros({m, n});
  const double* A = av.data().data();
  const double* B = bv.data().data();
  auto O = out.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      double* orow = O.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::uint64_t macs = static_cast<std::uint64_t>(m) * k * n;
  auto fn = [m, k, n](const Tape& t, std::size_t node, const Tensor& g,
                      std::vector<Tensor>& grads) {
    const std::size_t ia = t.inputs(node)[0];
    const std::size_t ib = t.inputs(node)[1];
    const double* A = t.value_at(ia).data().data();
    const double* B = t.value_at(ib).data().data();
    const double* G = g.data().data();
    auto dA = grads[ia].values();
    auto dB = grads[ib].values();
    // dA = G * B^T, dB = A^T * G
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double acc = 0.0;
        const double* brow = B + p * n;
        const double* grow = G + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        dA[i * k + p] += acc;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        const double* grow = G + i * n;
        double* drow = dB.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
      }
    }
  };
  return tape.record(std::move(out), {a.index, b.index}, fn, macs, 2 * macs);
}

/// Elementwise sum; either operand may be a rank-0 scalar.
inline Var add(Tape& tape, Var a, Var b) { return detail::binary(tape, detail::Binary::add, a, b); }
inline Var sub(Tape& tape, Var a, Var b) { return detail::binary(tape, detail::Binary::sub, a, b); }
inline Var mul(Tape& tape, Var a, Var b) { return detail::binary(tape, detail::Binary::mul, a, b); }

/// Multiplication by a constant.
inline Var scale(Tape& tape, Var a, double c) {
  tape.check(a);
  Tensor out = tape.value(a);
  for (double& v : out.values()) v *= c;
  const std::uint64_t n = out.size();
  auto fn = [c](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    auto& dx = grads[t.inputs(node)[0]];
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += c * g[i];
  };
  return tape.record(std::move(out), {a.index}, fn, n, n);
}

inline Var relu(Tape& tape, Var a) {
  tape.check(a);
  Tensor out = tape.value(a);
  for (double& v : out.values()) v = std::max(v, 0.0);
  auto fn = [](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    const std::size_t ia = t.inputs(node)[0];
    const Tensor& x = t.value_at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) grads[ia][i] += g[i];
    }
  };
  return tape.record(std::move(out), {a.index}, fn, 0, 0);
}

inline Var exp(Tape& tape, Var a) {
  tape.check(a);
  Tensor out = tape.value(a);
  for (double& v : out.values()) v = std::exp(v);
  auto fn = [](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    const Tensor& y = t.value_at(node);
    auto& dx = grads[t.inputs(node)[0]];
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i];
  };
  return tape.record(std::move(out), {a.index}, fn, 0, 0);
}

inline Var log(Tape& tape, Var a) {
  tape.check(a);
  Tensor out = tape.value(a);
  for (double& v : out.values()) {
    if (!(v > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(v));
    v = std::log(v);
  }
  auto fn = [](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    const std::size_t ia = t.inputs(node)[0];
    const Tensor& x = t.value_at(ia);
    for (std::size_t i = 0; i < g.size(); ++i) grads[ia][i] += g[i] / x[i];
  };
  return tape.record(std::move(out), {a.index}, fn, 0, 0);
}

/// Sum of all elements, as a scalar.
inline Var sum(Tape& tape, Var a) {
  tape.check(a);
  const Tensor& x = tape.value(a);
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto fn = [](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    auto& dx = grads[t.inputs(node)[0]];
    for (double& v : dx.values()) v += g[0];
  };
  return tape.record(Tensor::scalar(s), {a.index}, fn, 0, 0);
}

/// Contiguous range [begin, begin + count) of a rank-1 tensor.
inline Var slice(Tape& tape, Var a, std::size_t begin, std::size_t count) {
  tape.check(a);
  const Tensor& x = tape.value(a);
  if (x.rank() != 1 || begin + count > x.size()) {
    throw DimensionError("slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin),
                          x.data().begin() + static_cast<std::ptrdiff_t>(begin + count));
  auto fn = [begin](const Tape& t, std::size_t node, const Tensor& g, std::vector<Tensor>& grads) {
    auto& dx = grads[t.inputs(node)[0]];
    for (std::size_t i = 0; i < g.size(); ++i) dx[begin + i] += g[i];
  };
  return tape.record(Tensor::vector(std::move(out)), {a.index}, fn, 0, 0);
}

/// Max-subtracted log-softmax of logits / temperature.
inline Var log_softmax(Tape& tape, Var logits, double temperature = 1.0) {
  tape.check(logits);
  const Tensor& z = tape.value(logits);
  if (z.rank() != 1 || z.size() == 0) {
    throw DimensionError("log_softmax needs a nonempty vector, got " + to_string(z.shape()));
  }
  if (!(temperature > 0.0)) throw DomainError("log_softmax temperature must be positive");
  if (!z.all_finite()) throw NumericError("log_softmax: non-finite logits");
  Tensor out = z;
  for (double& v : out.values()) v /= temperature;
  const double mx = *std::max_element(out.data().begin(), out.data().end());
  double s = 0.0;
  for (double v : out.values()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : out.values()) v -= lse;
  if (!out.all_finite()) throw NumericError("log_softmax produced non-finite output");
  auto fn = [temperature](const Tape& t, std::size_t node, const Tensor& g,
                          std::vector<Tensor>& grads) {
    const Tensor& y = t.value_at(node);
    auto& dz = grads[t.inputs(node)[0]];
    double gs = 0.0;
    for (double v : g.values()) gs += v;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dz[i] += (g[i] - std::exp(y[i]) * gs) / temperature;
    }
  };
  return tape.record(std::move(out), {logits.index}, fn, 0, 0);
}

/// -sum(label * log_probs) for a (possibly soft) label distribution.
inline Var cross_entropy(Tape& tape, Var log_probs, const Tensor& soft_label) {
  tape.check(log_probs);
  const Tensor& lp = tape.value(log_probs);
  detail::require_same_shape("cross_entropy", lp, soft_label);
  double total = 0.0;
  for (double v : soft_label.values()) {
    if (v < 0.0) throw DomainError("cross_entropy: negative label entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("cross_entropy: label sums to " + std::to_string(total));
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    if (soft_label[i] != 0.0) loss -= soft_label[i] * lp[i];
  }
  auto fn = [label = soft_label](const Tape& t, std::size_t node, const Tensor& g,
                                 std::vector<Tensor>& grads) {
    auto& dx = grads[t.inputs(node)[0]];
    for (std::size_t i = 0; i < label.size(); ++i) dx[i] -= g[0] * label[i];
  };
  return tape.record(Tensor::scalar(loss), {log_probs.index}, fn, 0, 0);
}

/// Probabilities from logits, computed off-tape.
inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  if (logits.empty()) throw DimensionError("softmax of empty vector");
  std::vector<double> p(logits.begin(), logits.end());
  for (double& v : p) v /= temperature;
  const double mx = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace vrmood

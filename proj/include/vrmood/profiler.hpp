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

// Inference cost of each detection scheme, measured by running the scheme
// once on a probe input with tape instrumentation.
//
// Memory is modeled, not sampled: parameter bytes (plus fitted detector
// statistics) and the peak of simultaneously live activations, 8 bytes per
// value. The likelihood-ratio generative detector has no counterpart here.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrmood/detectors.hpp"
#include "vrmood/error.hpp"
#include "vrmood/model.hpp"

namespace vrmood {

enum class Scheme { base, msp, aux, odin, mahalanobis };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::base: return "base";
    case Scheme::msp: return "msp";
    case Scheme::aux: return "aux";
    case Scheme::odin: return "odin";
    case Scheme::mahalanobis: return "mahalanobis";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "base") return Scheme::base;
  if (s == "msp") return Scheme::msp;
  if (s == "aux") return Scheme::aux;
  if (s == "odin") return Scheme::odin;
  if (s == "mahalanobis") return Scheme::mahalanobis;
  throw ConfigError("unknown profiling scheme '" + s + "'");
}

struct CostReport {
  std::string scheme;
  std::uint64_t mac_total = 0;
  std::size_t param_bytes = 0;
  std::size_t peak_activation_bytes = 0;
  double normalized_mac = 0.0;
  double normalized_memory = 0.0;

  std::size_t memory_bytes() const noexcept { return param_bytes + peak_activation_bytes; }
};

/// Forward MACs of a dense stack: sum of in * out over layers.
inline std::uint64_t dense_forward_macs(const ModelConfig& config) {
  std::uint64_t macs = 0;
  std::size_t in = config.input_dim;
  for (std::size_t h : config.hidden) {
    macs += static_cast<std::uint64_t>(in) * h;
    in = h;
  }
  return macs + static_cast<std::uint64_t>(in) * config.output_width();
}

/// Raw counts for one scheme (normalized fields left at zero). Base, msp,
/// odin and mahalanobis run on the k-output classifier; aux runs on the
/// k+1-output classifier.
inline CostReport measure_scheme(Scheme scheme, const Model& model, const MahalanobisStats* stats,
                                 const OdinParams& odin = {}) {
  const Model base = model.without_aux();
  const Tensor probe_x = Tensor::filled({model.input_dim()}, 0.5);
  CostProbe probe;
  CostReport r;
  r.scheme = to_string(scheme);
  r.param_bytes = base.parameter_count() * sizeof(double);
  switch (scheme) {
    case Scheme::base:
    case Scheme::msp:
      msp_score(base, probe_x, &probe);
      break;
    case Scheme::aux: {
      const Model aux = model.with_aux();
      r.param_bytes = aux.parameter_count() * sizeof(double);
      aux_score(aux, probe_x, &probe);
      break;
    }
    case Scheme::odin:
      odin_score(base, probe_x, odin, &probe);
      break;
    case Scheme::mahalanobis: {
      if (stats == nullptr) throw ConfigError("mahalanobis profiling needs fitted statistics");
      const std::size_t d = stats->feature_dim();
      if (d != base.feature_dim()) throw ConfigError("mahalanobis statistics do not match the model");
      mahalanobis_score(*stats, base, probe_x, &probe);
      r.param_bytes += (stats->class_means.size() * d + d * d) * sizeof(double);
      // feature vector and centered difference
      probe.peak_activation_bytes = std::max(probe.peak_activation_bytes, 2 * d * sizeof(double));
      break;
    }
  }
  r.mac_total = probe.macs;
  r.peak_activation_bytes = probe.peak_activation_bytes;
  return r;
}

/// Reports for `schemes`, normalized to the base scheme.
inline std::vector<CostReport> profile(const std::vector<Scheme>& schemes, const Model& model,
                                       const MahalanobisStats* stats, const OdinParams& odin = {}) {
  const CostReport base = measure_scheme(Scheme::base, model, stats, odin);
  std::vector<CostReport> out;
  for (Scheme s : schemes) {
    CostReport r = s == Scheme::base ? base : measure_scheme(s, model, stats, odin);
    r.normalized_mac = static_cast<double>(r.mac_total) / static_cast<double>(base.mac_total);
    r.normalized_memory = static_cast<double>(r.memory_bytes()) / static_cast<double>(base.memory_bytes());
    out.push_back(r);
  }
  return out;
}

inline CostReport profile(Scheme scheme, const Model& model, const MahalanobisStats* stats,
                          const OdinParams& odin = {}) {
  return profile(std::vector<Scheme>{scheme}, model, stats, odin).front();
}

inline nlohmann::json to_json(const std::vector<CostReport>& reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"scheme", r.scheme},
                   {"mac_total", r.mac_total},
                   {"param_bytes", r.param_bytes},
                   {"peak_activation_bytes", r.peak_activation_bytes},
                   {"normalized_mac", r.normalized_mac},
                   {"normalized_memory", r.normalized_memory}});
  }
  return arr;
}

inline void write_cost_table(std::ostream& os, const std::vector<CostReport>& reports) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-12s %12s %12s %12s %9s %9s\n", "scheme", "macs", "param_B",
                "peak_act_B", "norm_mac", "norm_mem");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-12s %12llu %12zu %12zu %9.4f %9.4f\n", r.scheme.c_str(),
                  static_cast<unsigned long long>(r.mac_total), r.param_bytes, r.peak_activation_bytes,
                  r.normalized_mac, r.normalized_memory);
    os << buf;
  }
}

inline void write_cost_csv(std::ostream& os, const std::vector<CostReport>& reports) {
  os << "scheme,mac_total,param_bytes,peak_activation_bytes,normalized_mac,normalized_memory\n";
  char buf[200];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%zu,%zu,%.6f,%.6f\n", r.scheme.c_str(),
                  static_cast<unsigned long long>(r.mac_total), r.param_bytes, r.peak_activation_bytes,
                  r.normalized_mac, r.normalized_memory);
    os << buf;
  }
}

}  // namespace vrmood

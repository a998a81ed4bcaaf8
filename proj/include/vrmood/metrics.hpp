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

// Detection metrics. Out-of-distribution is the positive class and a sample
// is predicted positive when its score is >= the threshold.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrmood/error.hpp"

namespace vrmood {

struct ScoredSample {
  double score = 0.0;
  bool is_ood = false;
};

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double precision = 1.0;
};

namespace detail {

inline void require_finite(std::span<const ScoredSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw DomainError("scored sample has a non-finite score");
  }
}

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const ScoredSample> samples) {
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.is_ood ? 1 : 0;
  return {pos, samples.size() - pos};
}

inline void require_both_classes(std::span<const ScoredSample> samples, const char* what) {
  const auto [pos, neg] = class_counts(samples);
  if (pos == 0 || neg == 0) {
    throw DegenerateInputError(std::string(what) + " needs both OoD and in-distribution samples");
  }
}

/// Cumulative (tp, fp) after each distinct score, in decreasing score order.
struct Sweep {
  std::vector<double> thresholds;
  std::vector<std::size_t> tp;
  std::vector<std::size_t> fp;
};

inline Sweep sweep(std::span<const ScoredSample> samples) {
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
  Sweep s;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) {
      if (sorted[i].is_ood) ++tp; else ++fp;
    }
    s.thresholds.push_back(t);
    s.tp.push_back(tp);
    s.fp.push_back(fp);
  }
  return s;
}

}  // namespace detail

inline Confusion confusion_at_threshold(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw DegenerateInputError("confusion_at_threshold: no samples");
  Confusion c;
  for (const auto& s : samples) {
    const bool positive = s.score >= threshold;
    if (s.is_ood) {
      positive ? ++c.tp : ++c.fn;
    } else {
      positive ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

/// ROC points from threshold +inf (0, 0) down through every distinct score;
/// the last point is (1, 1). Precision is TP / (TP + FP), taken as 1 when
/// nothing is predicted positive.
inline std::vector<RocPoint> roc_curve(std::span<const ScoredSample> samples) {
  detail::require_finite(samples);
  detail::require_both_classes(samples, "roc_curve");
  const auto [pos, neg] = detail::class_counts(samples);
  const auto sw = detail::sweep(samples);
  std::vector<RocPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0, 1.0});
  for (std::size_t i = 0; i < sw.thresholds.size(); ++i) {
    const double tp = static_cast<double>(sw.tp[i]);
    const double fp = static_cast<double>(sw.fp[i]);
    curve.push_back({sw.thresholds[i], tp / static_cast<double>(pos), fp / static_cast<double>(neg),
                     tp / (tp + fp)});
  }
  return curve;
}

/// Probability that a random OoD score exceeds a random in-distribution
/// score, ties counting one half (Mann-Whitney U with mid-ranks).
inline double auroc(std::span<const ScoredSample> samples) {
  detail::require_finite(samples);
  detail::require_both_classes(samples, "auroc");
  const auto [pos, neg] = detail::class_counts(samples);
  std::vector<ScoredSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredSample& a, const ScoredSample& b) { return a.score < b.score; });
  // Twice the rank sum of positives keeps mid-ranks integral.
  long double rank_sum_x2 = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t tied_pos = 0;
    for (; j < sorted.size() && sorted[j].score == sorted[i].score; ++j) tied_pos += sorted[j].is_ood;
    // ranks i+1 .. j, mid-rank (i + 1 + j) / 2
    rank_sum_x2 += static_cast<long double>(tied_pos) * static_cast<long double>(i + 1 + j);
    i = j;
  }
  const long double p = static_cast<long double>(pos);
  const long double u = rank_sum_x2 / 2 - p * (p + 1) / 2;
  return static_cast<double>(u / (p * static_cast<long double>(neg)));
}

/// Step-wise area under precision-recall: sum over decreasing thresholds of
/// (R_i - R_{i-1}) * P_i.
inline double auprc(std::span<const ScoredSample> samples) {
  detail::require_finite(samples);
  const auto [pos, neg] = detail::class_counts(samples);
  if (pos == 0) throw DegenerateInputError("auprc needs at least one OoD sample");
  const auto sw = detail::sweep(samples);
  double area = 0.0;
  std::size_t prev_tp = 0;
  for (std::size_t i = 0; i < sw.thresholds.size(); ++i) {
    const double tp = static_cast<double>(sw.tp[i]);
    const double precision = tp / (tp + static_cast<double>(sw.fp[i]));
    area += static_cast<double>(sw.tp[i] - prev_tp) / static_cast<double>(pos) * precision;
    prev_tp = sw.tp[i];
  }
  return area;
}

/// Best balanced accuracy 0.5 * (TPR + 1 - FPR) over ROC thresholds.
inline double detection_accuracy(std::span<const ScoredSample> samples) {
  const auto curve = roc_curve(samples);
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, 0.5 * (p.tpr + 1.0 - p.fpr));
  return best;
}

/// threshold,tpr,fpr,precision per point.
inline void write_curve_csv(std::ostream& os, const std::vector<RocPoint>& curve) {
  os << "threshold,tpr,fpr,precision\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.threshold, p.tpr, p.fpr, p.precision);
    os << buf;
  }
}

}  // namespace vrmood

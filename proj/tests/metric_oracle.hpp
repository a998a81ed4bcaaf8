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


// Exhaustive-threshold reference implementations of the detection metrics.
// Every quantity is counted directly from the samples at each candidate
// threshold; nothing is shared with the library's sweep.

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "vrmood/metrics.hpp"

namespace vrmood::testing_oracle {

struct Counts {
  long double tp = 0, fp = 0, pos = 0, neg = 0;
};

inline Counts count_at(const std::vector<ScoredSample>& s, double tau) {
  Counts c;
  for (const auto& x : s) {
    (x.is_ood ? c.pos : c.neg) += 1;
    if (x.score >= tau) (x.is_ood ? c.tp : c.fp) += 1;
  }
  return c;
}

/// Distinct scores in decreasing order.
inline std::vector<double> thresholds_desc(const std::vector<ScoredSample>& s) {
  std::set<double, std::greater<>> t;
  for (const auto& x : s) t.insert(x.score);
  return {t.begin(), t.end()};
}

/// Fraction of (OoD, in-distribution) pairs ordered correctly, ties 1/2.
inline long double brute_auroc(const std::vector<ScoredSample>& s) {
  long double wins = 0, pairs = 0;
  for (const auto& p : s) {
    if (!p.is_ood) continue;
    for (const auto& n : s) {
      if (n.is_ood) continue;
      pairs += 1;
      wins += p.score > n.score ? 1.0L : (p.score == n.score ? 0.5L : 0.0L);
    }
  }
  return wins / pairs;
}

inline long double brute_auprc(const std::vector<ScoredSample>& s) {
  long double area = 0, prev_recall = 0;
  for (double tau : thresholds_desc(s)) {
    const Counts c = count_at(s, tau);
    const long double recall = c.tp / c.pos;
    area += (recall - prev_recall) * (c.tp / (c.tp + c.fp));
    prev_recall = recall;
  }
  return area;
}

inline long double brute_detection_accuracy(const std::vector<ScoredSample>& s) {
  std::vector<double> taus = thresholds_desc(s);
  taus.push_back(std::numeric_limits<double>::infinity());
  taus.push_back(-std::numeric_limits<double>::infinity());
  long double best = 0;
  for (double tau : taus) {
    const Counts c = count_at(s, tau);
    best = std::max(best, 0.5L * (c.tp / c.pos + 1.0L - c.fp / c.neg));
  }
  return best;
}

/// Random sample set of size 2..max_n with both classes and scores drawn from
/// a small grid so ties are frequent.
inline std::vector<ScoredSample> random_scored_set(std::mt19937_64& rng, std::size_t max_n) {
  std::uniform_int_distribution<std::size_t> size(2, max_n);
  std::uniform_int_distribution<int> grid(0, 12);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> cont(-3.0, 3.0);
  const bool gridded = coin(rng);
  std::vector<ScoredSample> s(size(rng));
  for (auto& x : s) {
    x.score = gridded ? 0.25 * grid(rng) : cont(rng);
    x.is_ood = coin(rng);
  }
  s[0].is_ood = true;
  s[1].is_ood = false;
  std::shuffle(s.begin(), s.end(), rng);
  return s;
}

}  // namespace vrmood::testing_oracle

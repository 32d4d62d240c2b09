/*
 * Copyright 2026 The mtfas Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mtfas/metrics.hpp"
#include "mtfas/rng.hpp"

namespace mtfas::testing {

// Brute-force references. Error rates are piecewise constant in the
// threshold, changing only at observed scores, so every achievable
// (APCER, BPCER) pair is seen by evaluating below the minimum and exactly at
// each distinct score.

inline ErrorRates brute_rates(const ScoreSet& s, double thr) {
  double a = 0, b = 0;
  for (double x : s.spoof)
    if (!(x > thr)) a += 1;
  for (double x : s.live)
    if (x > thr) b += 1;
  ErrorRates r;
  r.apcer = a / static_cast<double>(s.spoof.size());
  r.bpcer = b / static_cast<double>(s.live.size());
  r.acer = (r.apcer + r.bpcer) / 2;
  return r;
}

inline double brute_auc(const ScoreSet& s) {
  double wins = 0;
  for (double p : s.spoof)
    for (double l : s.live) wins += p > l ? 1.0 : (p == l ? 0.5 : 0.0);
  return wins / static_cast<double>(s.spoof.size() * s.live.size());
}

inline double brute_eer(const ScoreSet& s) {
  std::vector<double> thr(s.live);
  thr.insert(thr.end(), s.spoof.begin(), s.spoof.end());
  std::sort(thr.begin(), thr.end());
  thr.insert(thr.begin(), -std::numeric_limits<double>::infinity());
  double best_gap = std::numeric_limits<double>::infinity(), value = 0;
  for (double t : thr) {
    const ErrorRates r = brute_rates(s, t);
    if (std::abs(r.apcer - r.bpcer) < best_gap) {
      best_gap = std::abs(r.apcer - r.bpcer);
      value = (r.apcer + r.bpcer) / 2;
    }
  }
  return value;
}

/// True when every threshold reaching the minimal |APCER - BPCER| also gives
/// the same (APCER + BPCER) / 2, so the tie-break cannot change the value.
inline bool eer_value_unambiguous(const ScoreSet& s) {
  std::vector<double> thr(s.live);
  thr.insert(thr.end(), s.spoof.begin(), s.spoof.end());
  std::sort(thr.begin(), thr.end());
  thr.insert(thr.begin(), -std::numeric_limits<double>::infinity());
  double best_gap = std::numeric_limits<double>::infinity();
  std::vector<double> values;
  for (double t : thr) {
    const ErrorRates r = brute_rates(s, t);
    const double gap = std::abs(r.apcer - r.bpcer);
    if (gap < best_gap) {
      best_gap = gap;
      values.clear();
    }
    if (gap == best_gap) values.push_back((r.apcer + r.bpcer) / 2);
  }
  return std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); });
}

/// Up to `max_total` scores, both classes non-empty, drawn from a coarse grid
/// so that ties are common.
inline ScoreSet random_score_set(Rng& rng, std::size_t max_total) {
  ScoreSet s;
  const std::size_t total = 2 + rng.below(max_total - 1);
  const std::size_t n_live = 1 + rng.below(total - 1);
  const bool coarse = rng.below(2) == 0;
  auto draw = [&]() { return coarse ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform(); };
  for (std::size_t i = 0; i < total; ++i) (i < n_live ? s.live : s.spoof).push_back(draw());
  return s;
}

}  // namespace mtfas::testing

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

#include "mtfas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mtfas {

void ScoreSet::validate() const {
  if (live.empty()) throw MetricsError("score set has no live scores");
  if (spoof.empty()) throw MetricsError("score set has no spoof scores");
  for (const auto* v : {&live, &spoof}) {
    for (double s : *v) {
      if (!std::isfinite(s)) throw MetricsError("non-finite score");
    }
  }
}

template <typename T>
double score(const Tensor<T>& map) {
  if (map.size() == 0) throw MetricsError("empty map");
  double acc = 0.0;
  for (T v : map.data()) acc += static_cast<double>(v);
  return acc / static_cast<double>(map.size());
}

template double score<float>(const Tensor<float>&);
template double score<double>(const Tensor<double>&);

Label classify(double score, double threshold) {
  return score > threshold ? Label::spoof : Label::live;
}

ErrorRates error_rates(const ScoreSet& scores, double threshold) {
  scores.validate();
  std::size_t missed = 0, rejected = 0;
  for (double s : scores.spoof) missed += classify(s, threshold) == Label::live;
  for (double s : scores.live) rejected += classify(s, threshold) == Label::spoof;
  ErrorRates r;
  r.apcer = static_cast<double>(missed) / static_cast<double>(scores.spoof.size());
  r.bpcer = static_cast<double>(rejected) / static_cast<double>(scores.live.size());
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

double auc(const ScoreSet& scores) {
  scores.validate();
  // rank-sum with averaged ranks for ties
  std::vector<std::pair<double, bool>> all;
  for (double s : scores.live) all.emplace_back(s, false);
  for (double s : scores.spoof) all.emplace_back(s, true);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double spoof_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second) spoof_rank_sum += rank;
    }
    i = j;
  }
  const double ns = static_cast<double>(scores.spoof.size());
  const double nl = static_cast<double>(scores.live.size());
  return (spoof_rank_sum - ns * (ns + 1.0) / 2.0) / (ns * nl);
}

EerPoint eer(const ScoreSet& scores) {
  scores.validate();
  std::vector<double> all(scores.live);
  all.insert(all.end(), scores.spoof.begin(), scores.spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> candidates;
  candidates.push_back(std::nextafter(all.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    const double mid = all[i] + (all[i + 1] - all[i]) / 2.0;
    candidates.push_back(mid < all[i + 1] ? mid : all[i]);  // adjacent doubles
  }
  candidates.push_back(all.back());

  EerPoint best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : candidates) {  // ascending, so strict < keeps the lowest on ties
    const ErrorRates r = error_rates(scores, t);
    const double gap = std::abs(r.apcer - r.bpcer);
    if (gap < best_gap) {
      best_gap = gap;
      best = {(r.apcer + r.bpcer) / 2.0, t};
    }
  }
  return best;
}

double hter(const ScoreSet& dev, const ScoreSet& test) {
  const ErrorRates r = error_rates(test, eer(dev).threshold);
  return (r.apcer + r.bpcer) / 2.0;
}

MetricsReport evaluate(const std::string& name, const ScoreSet& dev, const ScoreSet& test) {
  MetricsReport m;
  m.name = name;
  m.threshold = eer(dev).threshold;
  const ErrorRates at = error_rates(test, m.threshold);
  m.apcer = at.apcer;
  m.bpcer = at.bpcer;
  m.acer = at.acer;
  m.auc = auc(test);
  m.eer = eer(test).eer;
  m.hter = hter(dev, test);
  const ErrorRates fixed = error_rates(test, 0.5);
  m.apcer_fixed = fixed.apcer;
  m.bpcer_fixed = fixed.bpcer;
  m.acer_fixed = fixed.acer;
  return m;
}

std::string MetricsReport::csv_header() {
  return "name,apcer,bpcer,acer,auc,eer,hter,threshold,apcer_at_0.5,bpcer_at_0.5,acer_at_0.5";
}

std::string MetricsReport::csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << name << ',' << apcer << ',' << bpcer << ',' << acer << ',' << auc << ',' << eer << ','
     << hter << ',' << threshold << ',' << apcer_fixed << ',' << bpcer_fixed << ',' << acer_fixed;
  return os.str();
}

std::string MetricsReport::text_block() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%s\n"
                "  threshold (dev EER)  %.6f\n"
                "  APCER / BPCER / ACER %.4f / %.4f / %.4f\n"
                "  at 0.5               %.4f / %.4f / %.4f\n"
                "  AUC %.4f  EER %.4f  HTER %.4f\n",
                name.c_str(), threshold, apcer, bpcer, acer, apcer_fixed, bpcer_fixed, acer_fixed,
                auc, eer, hter);
  return buf;
}

}  // namespace mtfas

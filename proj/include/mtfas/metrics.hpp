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

#include <stdexcept>
#include <string>
#include <vector>

#include "mtfas/synth_data.hpp"
#include "mtfas/tensor.hpp"

namespace mtfas {

class MetricsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ScoreSet {
  std::vector<double> live;
  std::vector<double> spoof;

  /// Throws MetricsError if a class is empty or a score is not finite.
  void validate() const;
};

/// Arithmetic mean of every pixel.
template <typename T>
double score(const Tensor<T>& map);

/// Spoof iff score > threshold.
Label classify(double score, double threshold);

struct ErrorRates {
  double apcer = 0.0;  // spoof scored <= threshold
  double bpcer = 0.0;  // live scored > threshold
  double acer = 0.0;
};

ErrorRates error_rates(const ScoreSet& scores, double threshold);

/// Mann-Whitney: P(spoof > live) with ties counted 1/2.
double auc(const ScoreSet& scores);

struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Candidate thresholds are the midpoints between consecutive distinct
/// scores plus one below the minimum and the maximum itself. Picks the
/// candidate minimizing |APCER - BPCER|, lowest threshold on ties.
EerPoint eer(const ScoreSet& scores);

/// (APCER + BPCER) / 2 on `test` at the EER threshold of `dev`.
double hter(const ScoreSet& dev, const ScoreSet& test);

struct MetricsReport {
  std::string name;
  double apcer = 0.0, bpcer = 0.0, acer = 0.0;  // at `threshold`
  double auc = 0.0;
  double eer = 0.0;  // of the test set itself
  double hter = 0.0;
  double threshold = 0.0;  // dev EER threshold
  double apcer_fixed = 0.0, bpcer_fixed = 0.0, acer_fixed = 0.0;  // at 0.5

  static std::string csv_header();
  std::string csv_row() const;
  std::string text_block() const;
};

MetricsReport evaluate(const std::string& name, const ScoreSet& dev, const ScoreSet& test);

}  // namespace mtfas

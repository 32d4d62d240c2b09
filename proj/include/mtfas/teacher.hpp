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

#include <cstdint>
#include <optional>
#include <string_view>

#include "mtfas/network.hpp"
#include "mtfas/synth_data.hpp"
#include "mtfas/tape.hpp"

namespace mtfas {

enum class SupervisionRegime { constrained_0_2, normalized_0_1, binary };

std::string_view regime_name(SupervisionRegime regime);

template <typename T>
struct SupervisionMap {
  Tensor<T> values;  // (1, H/8, W/8)
  SupervisionRegime regime = SupervisionRegime::constrained_0_2;
};

/// MT_t weights and the momentum copy MT_v, sharing one layout.
template <typename T>
struct TeacherState {
  WeightBundle<T> omega;
  WeightBundle<T> omega_hat;

  /// omega from init_weights, omega_hat an exact copy.
  static TeacherState initial(const NetworkSpec& spec, std::uint64_t seed);
};

enum class TeacherView { mt_t, mt_v };

/// Converts a dataset image to the working precision, checking its shape.
template <typename T>
Tensor<T> network_input(const NetworkSpec& spec, const Sample& sample);

/// 2 * sigmoid(g(x)) for a spoof, the zero map for a live sample. When
///  is set and the sample is a spoof, the tape ends in the 2*sigmoid
/// node, so jvp/vjp against it differentiate the supervision map itself.
/// Returned values are kept strictly inside (0, 2) even where the sigmoid
/// saturates in floating point.
template <typename T>
struct TeacherPass {
  Tensor<T> map;
  std::optional<Tape<T>> tape;
};

template <typename T>
TeacherPass<T> teacher_pass(const NetworkSpec& spec, const WeightBundle<T>& weights,
                            const Sample& sample, bool record);

template <typename T>
SupervisionMap<T> teacher_forward(const NetworkSpec& spec, const TeacherState<T>& state,
                                  TeacherView which, const Sample& sample);

/// Per-image min-max of sigmoid(g). Live and degenerate (range < 1e-6)
/// spoof maps come back as zero maps; the latter bump degenerate_map_count().
template <typename T>
SupervisionMap<T> normalized_supervision(const WeightBundle<T>& omega, const NetworkSpec& spec,
                                         const Sample& sample);

/// Per-image min-max of the raw logits g, same degenerate rule.
template <typename T>
SupervisionMap<T> baseline_teacher_output(const WeightBundle<T>& omega, const NetworkSpec& spec,
                                          const Sample& sample);

/// Zero map for live, one map for spoof.
template <typename T>
SupervisionMap<T> binary_supervision(const NetworkSpec& spec, const Sample& sample);

/// Per-map min-max. Returns the zero map and
/// counts a degenerate case when the range is below 1e-6.
template <typename T>
Tensor<T> min_max_normalize(const Tensor<T>& map);

std::uint64_t degenerate_map_count();
void reset_degenerate_map_count();

}  // namespace mtfas

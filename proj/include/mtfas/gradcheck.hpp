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

#include <functional>
#include <cstdint>
#include <span>
#include <vector>

#include "mtfas/tape.hpp"
#include "mtfas/tensor.hpp"
#include "mtfas/weights.hpp"

namespace mtfas {

/// |a - b| / max(|a|, |b|, 1e-12)
double relative_error(double a, double b);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares `analytic` against central differences of `loss_fn` with the
/// given step, coordinate by coordinate. When `coords` is empty every
/// coordinate is checked. Throws NumericalError if the loss is ever non-finite.
template <typename T>
FiniteDiffResult finite_diff_check(const std::function<T(const WeightBundle<T>&)>& loss_fn,
                                   const WeightBundle<T>& weights, const Tensor<T>& analytic,
                                   T step, std::span<const std::size_t> coords = {});

/// ReLU signs and max-pool argmaxes of a recorded tape, in node order. Two
/// tapes with equal patterns lie on the same linear piece of every kink, which
/// is what central differences need between their probe points.
template <typename T>
std::vector<std::uint32_t> activation_pattern(const Tape<T>& tape);

}  // namespace mtfas

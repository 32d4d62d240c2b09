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

#include "mtfas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mtfas {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / denom;
}

template <typename T>
FiniteDiffResult finite_diff_check(const std::function<T(const WeightBundle<T>&)>& loss_fn,
                                   const WeightBundle<T>& weights, const Tensor<T>& analytic,
                                   T step, std::span<const std::size_t> coords) {
  if (!(step > T(0))) throw std::invalid_argument("finite_diff_check: step must be positive");
  if (analytic.size() != weights.flat().size()) {
    throw ShapeError("finite_diff_check: analytic gradient has " + std::to_string(analytic.size()) +
                     " entries, weights have " + std::to_string(weights.flat().size()));
  }
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(weights.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  FiniteDiffResult result;
  WeightBundle<T> probe = weights;
  for (std::size_t i : coords) {
    const T orig = probe.flat()[i];
    probe.flat()[i] = orig + step;
    const T up = loss_fn(probe);
    probe.flat()[i] = orig - step;
    const T down = loss_fn(probe);
    probe.flat()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_check: non-finite loss at coordinate " + std::to_string(i));
    }
    const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * step);
    const double err = relative_error(static_cast<double>(analytic[i]), numeric);
    if (err > result.max_rel_error || result.checked == 0) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      if (err >= result.max_rel_error) result.worst_index = i;
    }
    ++result.checked;
  }
  return result;
}

template <typename T>
std::vector<std::uint32_t> activation_pattern(const Tape<T>& tape) {
  std::vector<std::uint32_t> out;
  for (NodeId id = 0; id < tape.size(); ++id) {
    const auto& n = tape.node(id);
    if (n.op == Op::relu) {
      for (T v : tape.value(n.args[0]).data()) out.push_back(v > T(0) ? 1u : 0u);
    } else if (n.op == Op::max_pool2) {
      out.insert(out.end(), n.argmax.begin(), n.argmax.end());
    }
  }
  return out;
}

template std::vector<std::uint32_t> activation_pattern<float>(const Tape<float>&);
template std::vector<std::uint32_t> activation_pattern<double>(const Tape<double>&);

template FiniteDiffResult finite_diff_check<float>(const std::function<float(const WeightBundle<float>&)>&,
                                                   const WeightBundle<float>&, const Tensor<float>&,
                                                   float, std::span<const std::size_t>);
template FiniteDiffResult finite_diff_check<double>(
    const std::function<double(const WeightBundle<double>&)>&, const WeightBundle<double>&,
    const Tensor<double>&, double, std::span<const std::size_t>);

}  // namespace mtfas

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

#include <cstddef>
#include <exception>
#include <vector>

#include "mtfas/tensor.hpp"

namespace mtfas::detail {

/// Runs fn(i) for i in [0, n), possibly in parallel. Each index owns its
/// outputs, so results do not depend on scheduling. The exception from the
/// lowest failing index is rethrown.
template <typename F>
void for_each_index(std::size_t n, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Elementwise sum in index order.
template <typename T>
Tensor<T> ordered_sum(const std::vector<Tensor<T>>& parts, const Shape& shape) {
  Tensor<T> acc(shape);
  for (const Tensor<T>& p : parts) {
    if (p.rank() == 0) continue;  // absent
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
  }
  return acc;
}

template <typename T>
double map_mse(const Tensor<T>& a, const Tensor<T>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

}  // namespace mtfas::detail

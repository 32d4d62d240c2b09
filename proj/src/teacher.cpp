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

#include "mtfas/teacher.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

namespace mtfas {

namespace {
std::atomic<std::uint64_t> g_degenerate{0};
constexpr double kDegenerateRange = 1e-6;
}  // namespace

std::uint64_t degenerate_map_count() { return g_degenerate.load(); }
void reset_degenerate_map_count() { g_degenerate.store(0); }

std::string_view regime_name(SupervisionRegime regime) {
  switch (regime) {
    case SupervisionRegime::constrained_0_2: return "constrained_0_2";
    case SupervisionRegime::normalized_0_1: return "normalized_0_1";
    case SupervisionRegime::binary: return "binary";
  }
  return "binary";
}

template <typename T>
TeacherState<T> TeacherState<T>::initial(const NetworkSpec& spec, std::uint64_t seed) {
  TeacherState s;
  s.omega = init_weights<T>(spec, seed);
  s.omega_hat = s.omega;
  return s;
}

template <typename T>
Tensor<T> network_input(const NetworkSpec& spec, const Sample& sample) {
  if (sample.image.shape() != spec.input_shape) {
    throw ShapeError("sample " + std::to_string(sample.id) + " has shape " +
                     shape_str(sample.image.shape()) + ", network expects " +
                     shape_str(spec.input_shape));
  }
  return sample.image.cast<T>();
}

template <typename T>
TeacherPass<T> teacher_pass(const NetworkSpec& spec, const WeightBundle<T>& weights,
                            const Sample& sample, bool record) {
  Tensor<T> x = network_input<T>(spec, sample);
  if (!sample.is_spoof()) return {Tensor<T>(spec.output_shape), std::nullopt};

  Tape<T> tape(weights.layout_ptr());
  const NodeId in = tape.input(std::move(x));
  const NodeId g = build_forward(tape, spec, weights, in);
  const NodeId p = tape.scale(tape.sigmoid(g), T(2));
  tape.set_output(p);

  TeacherPass<T> r;
  r.map = tape.value(p);
  const T lo = std::nextafter(T(0), T(1));
  const T hi = std::nextafter(T(2), T(0));
  for (T& v : r.map.data()) v = std::clamp(v, lo, hi);
  if (record) r.tape = std::move(tape);
  return r;
}

template <typename T>
SupervisionMap<T> teacher_forward(const NetworkSpec& spec, const TeacherState<T>& state,
                                  TeacherView which, const Sample& sample) {
  const WeightBundle<T>& w = which == TeacherView::mt_t ? state.omega : state.omega_hat;
  return {teacher_pass(spec, w, sample, false).map, SupervisionRegime::constrained_0_2};
}

template <typename T>
Tensor<T> min_max_normalize(const Tensor<T>& map) {
  const auto [lo_it, hi_it] = std::minmax_element(map.data().begin(), map.data().end());
  const T lo = *lo_it, hi = *hi_it;
  Tensor<T> out(map.shape());
  if (!(static_cast<double>(hi) - static_cast<double>(lo) >= kDegenerateRange)) {
    g_degenerate.fetch_add(1);
    return out;
  }
  const T range = hi - lo;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - lo) / range;
  return out;
}

template <typename T>
SupervisionMap<T> normalized_supervision(const WeightBundle<T>& omega, const NetworkSpec& spec,
                                         const Sample& sample) {
  Tensor<T> x = network_input<T>(spec, sample);
  if (!sample.is_spoof()) return {Tensor<T>(spec.output_shape), SupervisionRegime::normalized_0_1};
  Tensor<T> s = forward(spec, omega, x, false).output;
  for (T& v : s.data()) v = T(1) / (T(1) + std::exp(-v));
  return {min_max_normalize(s), SupervisionRegime::normalized_0_1};
}

template <typename T>
SupervisionMap<T> baseline_teacher_output(const WeightBundle<T>& omega, const NetworkSpec& spec,
                                          const Sample& sample) {
  Tensor<T> x = network_input<T>(spec, sample);
  if (!sample.is_spoof()) return {Tensor<T>(spec.output_shape), SupervisionRegime::normalized_0_1};
  return {min_max_normalize(forward(spec, omega, x, false).output), SupervisionRegime::normalized_0_1};
}

template <typename T>
SupervisionMap<T> binary_supervision(const NetworkSpec& spec, const Sample& sample) {
  return {Tensor<T>(spec.output_shape, sample.is_spoof() ? T(1) : T(0)), SupervisionRegime::binary};
}

#define MTFAS_INSTANTIATE(T)                                                                       \
  template struct TeacherState<T>;                                                                \
  template Tensor<T> network_input<T>(const NetworkSpec&, const Sample&);                         \
  template TeacherPass<T> teacher_pass<T>(const NetworkSpec&, const WeightBundle<T>&,             \
                                          const Sample&, bool);                                   \
  template SupervisionMap<T> teacher_forward<T>(const NetworkSpec&, const TeacherState<T>&,       \
                                                TeacherView, const Sample&);                      \
  template Tensor<T> min_max_normalize<T>(const Tensor<T>&);                                      \
  template SupervisionMap<T> normalized_supervision<T>(const WeightBundle<T>&, const NetworkSpec&, \
                                                       const Sample&);                            \
  template SupervisionMap<T> baseline_teacher_output<T>(const WeightBundle<T>&,                   \
                                                        const NetworkSpec&, const Sample&);       \
  template SupervisionMap<T> binary_supervision<T>(const NetworkSpec&, const Sample&);

MTFAS_INSTANTIATE(float)
MTFAS_INSTANTIATE(double)
#undef MTFAS_INSTANTIATE

}  // namespace mtfas

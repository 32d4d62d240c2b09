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
#include <string>
#include <vector>

#include "mtfas/meta_trainer.hpp"
#include "mtfas/rng.hpp"

namespace mtfas {

/// One 1x1 conv on a (1, 1, 1) input. Fed a zero image the output is the
/// bias, so as a student f = theta and as a teacher P = 2 sigmoid(omega).
NetworkSpec scalar_toy_spec();

/// Zero image of the given shape, labelled as requested.
Sample constant_sample(std::uint64_t id, Label label, const Shape& shape, double value = 0.0);

struct ScalarToyResult {
  double implementation = 0.0;  // meta_gradient at the teacher bias
  double closed_form = 0.0;     // 8 alpha sigmoid'(omega) (theta* - 2 sigmoid(omega_hat))
  double theta_star = 0.0;
  double theta_star_closed_form = 0.0;
};

/// One spoof sample in each of phi_t and phi_v, mu = 0.
ScalarToyResult scalar_toy_check(double theta, double omega, double omega_hat, double alpha);

/// Overwrites every 1-D (bias) view with uniform values in [-scale, scale).
/// Zero biases put ReLUs exactly on their kink wherever the input is zero,
/// so central differences there see a one-sided slope.
void randomize_biases(WeightBundle<double>& weights, Rng& rng, double scale = 0.1);

/// FAS-DR-Light at widths 2/2/2 on 3x8x8 inputs: 303 parameters, 1x1 map.
NetworkSpec gradcheck_network_spec();

struct GradcheckOptions {
  std::size_t coords = 50;
  double step = 1e-4;
  double alpha = 0.1;
  double mu = 0.01;
  std::uint64_t seed = 0;
  std::size_t per_class_t = 2;  // phi_t: this many live and spoof
  std::size_t per_class_v = 2;
};

struct GradcheckCoordinate {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckReport {
  std::size_t parameters = 0;
  std::vector<GradcheckCoordinate> coords;
  double max_rel_error = 0.0;
};

/// Meta-gradient of the toy network against central differences of
/// meta_objective, on random images and random distinct weights.
GradcheckReport meta_gradcheck(const GradcheckOptions& opt);

}  // namespace mtfas

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

#include "mtfas/toys.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtfas/gradcheck.hpp"
#include "mtfas/rng.hpp"

namespace mtfas {

NetworkSpec scalar_toy_spec() {
  NetworkSpec s;
  s.kind = BackboneKind::custom;
  s.input_shape = {1, 1, 1};
  s.output_shape = {1, 1, 1};
  LayerDesc conv;
  conv.kind = LayerKind::conv;
  conv.name = "unit";
  conv.filters = 1;
  conv.kernel = 1;
  s.layers.push_back(conv);
  validate_spec(s);
  return s;
}

Sample constant_sample(std::uint64_t id, Label label, const Shape& shape, double value) {
  Sample s;
  s.id = id;
  s.label = label;
  s.attack = label == Label::spoof ? AttackType::patch_occluder : AttackType::none;
  s.image = Tensor<double>(shape, value);
  s.cue_mask = Tensor<double>(Shape{1, 1, 1}, label == Label::spoof ? 1.0 : 0.0);
  return s;
}

namespace {

WeightBundle<double> scalar_bundle(const NetworkSpec& spec, double bias) {
  WeightBundle<double> w(param_layout(spec));
  w.view("unit.weight")[0] = 0.5;  // multiplies a zero input
  w.view("unit.bias")[0] = bias;
  return w;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ScalarToyResult scalar_toy_check(double theta, double omega, double omega_hat, double alpha) {
  const NetworkSpec spec = scalar_toy_spec();
  const MetaModels models{spec, spec};
  const Sample train = constant_sample(0, Label::spoof, spec.input_shape);
  const Sample val = constant_sample(1, Label::spoof, spec.input_shape);
  const Batch phi_t{{&train}};
  const Batch phi_v{{&val}};
  const auto th = scalar_bundle(spec, theta);
  const auto om = scalar_bundle(spec, omega);
  const auto oh = scalar_bundle(spec, omega_hat);

  const LowerLevelResult<double> lower = lower_level_step(models, th, om, phi_t, alpha, 1);
  const ValidationResult<double> v = validation_loss(models, lower.theta_star, oh, phi_v, true);
  const MetaGradient<double> g = meta_gradient(models, lower, om, v, phi_t, alpha, 0.0);

  ScalarToyResult r;
  r.implementation = g.grad[om.layout().view("unit.bias").offset];
  r.theta_star = lower.theta_star.view("unit.bias")[0];
  r.theta_star_closed_form = theta - 2.0 * alpha * (theta - 2.0 * sigmoid(omega));
  const double ds = sigmoid(omega) * (1.0 - sigmoid(omega));
  r.closed_form = 8.0 * alpha * ds * (r.theta_star_closed_form - 2.0 * sigmoid(omega_hat));
  return r;
}

void randomize_biases(WeightBundle<double>& weights, Rng& rng, double scale) {
  const auto& views = weights.layout().views();
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].shape.size() != 1) continue;
    for (double& b : weights.view(v)) b = scale * (2.0 * rng.uniform() - 1.0);
  }
}

NetworkSpec gradcheck_network_spec() {
  return build_backbone(BackboneKind::fas_dr_light, 1, Shape{3, 8, 8}, {2, 2, 2});
}

GradcheckReport meta_gradcheck(const GradcheckOptions& opt) {
  const NetworkSpec spec = gradcheck_network_spec();
  const MetaModels models{spec, spec};
  Rng rng(mix_seed(opt.seed, 0x6772));

  std::vector<Sample> samples;
  const std::size_t per_class = opt.per_class_t + opt.per_class_v;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    Sample s = constant_sample(i, i % 2 ? Label::spoof : Label::live, spec.input_shape);
    for (double& v : s.image.data()) v = rng.uniform();
    samples.push_back(std::move(s));
  }
  Batch phi_t, phi_v;
  std::size_t live_t = 0, spoof_t = 0;
  for (const Sample& s : samples) {
    std::size_t& used = s.is_spoof() ? spoof_t : live_t;
    (used < opt.per_class_t ? phi_t : phi_v).samples.push_back(&s);
    ++used;
  }

  auto theta = init_weights<double>(spec, rng.next());
  auto omega = init_weights<double>(spec, rng.next());
  auto omega_hat = init_weights<double>(spec, rng.next());
  randomize_biases(theta, rng);
  randomize_biases(omega, rng);
  randomize_biases(omega_hat, rng);
  // MT_v close to, but distinct from, MT_t
  for (std::size_t i = 0; i < omega_hat.size(); ++i) {
    omega_hat.flat()[i] = 0.8 * omega.flat()[i] + 0.2 * omega_hat.flat()[i];
  }

  const MetaGradient<double> mg =
      meta_gradient(models, theta, omega, omega_hat, phi_t, phi_v, opt.alpha, opt.mu);

  std::vector<std::size_t> all(omega.size());
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  all.resize(std::min(opt.coords, all.size()));
  std::sort(all.begin(), all.end());

  const std::function<double(const WeightBundle<double>&)> objective = [&](const WeightBundle<double>& w) {
    return meta_objective(models, theta, w, omega_hat, phi_t, phi_v, opt.alpha, opt.mu);
  };

  GradcheckReport report;
  report.parameters = omega.size();
  for (std::size_t idx : all) {
    WeightBundle<double> plus = omega, minus = omega;
    plus.flat()[idx] += opt.step;
    minus.flat()[idx] -= opt.step;
    const double numeric = (objective(plus) - objective(minus)) / (2.0 * opt.step);
    const double analytic = mg.grad[idx];
    const double err = relative_error(analytic, numeric);
    report.coords.push_back({idx, analytic, numeric, err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

}  // namespace mtfas

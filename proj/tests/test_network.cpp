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

#include <cmath>

#include "doctest.h"
#include "mtfas/network.hpp"
#include "mtfas/rng.hpp"
#include "mtfas/toys.hpp"

using namespace mtfas;

TEST_SUITE("networks") {

TEST_CASE("output is (1, H/8, W/8) for every backbone, width and input size") {
  for (BackboneKind kind : {BackboneKind::fas_dr_light, BackboneKind::fas_dr}) {
    for (std::size_t scale : {1, 2, 4}) {
      for (std::size_t s : {64, 128, 256}) {
        const NetworkSpec spec = build_backbone(kind, scale, {3, s, s});
        CHECK(spec.output_shape == Shape{1, s / 8, s / 8});
        CHECK(propagate_shapes(spec).back() == spec.output_shape);
        CHECK(param_layout(spec)->tiles_exactly());
      }
    }
  }
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr, 1, {3, 64, 64}, {2, 2, 2});
  const auto w = init_weights<double>(spec, 0);
  CHECK(forward(spec, w, Tensor<double>(spec.input_shape, 0.5), false).output.shape() ==
        Shape{1, 8, 8});
}

TEST_CASE("width_scale multiplies every block width") {
  const NetworkSpec a = build_backbone(BackboneKind::fas_dr, 1, {3, 64, 64});
  const NetworkSpec b = build_backbone(BackboneKind::fas_dr, 2, {3, 64, 64});
  CHECK(param_layout(a)->view("stem.weight").shape == Shape{16, 3, 3, 3});
  CHECK(param_layout(b)->view("stem.weight").shape == Shape{32, 3, 3, 3});
  CHECK(param_layout(b)->view("block3.conv1.weight").shape == Shape{128, 64, 3, 3});
  CHECK(param_layout(b)->view("head2.weight").shape == Shape{1, 32, 3, 3});
  const NetworkSpec l = build_backbone(BackboneKind::fas_dr_light, 2, {3, 64, 64});
  CHECK(param_layout(l)->view("block1.conv1.weight").shape == Shape{16, 16, 3, 3});
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(build_backbone(BackboneKind::fas_dr, 1, {3, 60, 64}), ShapeError);
  CHECK_THROWS_AS(build_backbone(BackboneKind::fas_dr, 1, {3, 64}), ShapeError);
  CHECK_THROWS(build_backbone(BackboneKind::fas_dr, 0, {3, 64, 64}));
  CHECK_THROWS(build_backbone(BackboneKind::fas_dr, 1, {3, 64, 64}, {4, 4}));
  CHECK_THROWS(build_backbone(BackboneKind::custom, 1, {3, 64, 64}));
  CHECK_THROWS(parse_backbone("resnet"));
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr_light, 1, {3, 16, 16}, {2, 2, 2});
  const auto w = init_weights<double>(spec, 0);
  CHECK_THROWS_AS(forward(spec, w, Tensor<double>(Shape{3, 8, 8}), false), ShapeError);
  const NetworkSpec other = build_backbone(BackboneKind::fas_dr_light, 1, {3, 16, 16}, {2, 3, 2});
  CHECK_THROWS_AS(forward(other, w, Tensor<double>(other.input_shape), false), ShapeError);
}

TEST_CASE("init is deterministic in the seed and biases start at zero") {
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr_light, 1, {3, 64, 64});
  CHECK(init_weights<double>(spec, 3) == init_weights<double>(spec, 3));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = init_weights<double>(spec, s);
    const auto b = init_weights<double>(spec, s + 100);
    std::size_t nonbias = 0, differ = 0;
    for (std::size_t v = 0; v < a.layout().views().size(); ++v) {
      const ParamView& view = a.layout().views()[v];
      const bool bias = view.name.ends_with(".bias");
      for (std::size_t i = 0; i < view.size(); ++i) {
        const double x = a.view(v)[i], y = b.view(v)[i];
        if (bias) {
          CHECK(x == 0.0);
        } else {
          ++nonbias;
          differ += x != y;
          const double fan_in = static_cast<double>(view.shape[1] * view.shape[2] * view.shape[3]);
          CHECK(std::abs(x) <= std::sqrt(6.0 / fan_in));
        }
      }
    }
    CHECK(static_cast<double>(differ) >= 0.99 * static_cast<double>(nonbias));
  }
}

TEST_CASE("float and double init agree after rounding") {
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr, 1, {3, 64, 64});
  CHECK(init_weights<float>(spec, 9).flat() == init_weights<double>(spec, 9).flat().cast<float>());
}

TEST_CASE("all-zero weights give an all-zero map") {
  for (BackboneKind kind : {BackboneKind::fas_dr_light, BackboneKind::fas_dr}) {
    const NetworkSpec spec = build_backbone(kind, 1, {3, 32, 32}, {2, 2, 2});
    WeightBundle<double> w(param_layout(spec));
    Rng rng(4);
    Tensor<double> x(spec.input_shape);
    for (double& v : x.data()) v = rng.uniform();
    const Tensor<double> y = forward(spec, w, x, false).output;
    CHECK(y == Tensor<double>(spec.output_shape));
  }
}

TEST_CASE("a single 1x1 unit conv passes its input through") {
  const NetworkSpec spec = scalar_toy_spec();
  WeightBundle<double> w(param_layout(spec));
  w.view("unit.weight")[0] = 1.0;
  w.view("unit.bias")[0] = 0.25;
  const Tensor<double> x(spec.input_shape, 0.5);
  CHECK(forward(spec, w, x, false).output[0] == 0.75);
}

TEST_CASE("head bias shifts every output pixel by the same amount") {
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr_light, 1, {3, 32, 32}, {2, 2, 2});
  auto w = init_weights<double>(spec, 2);
  const Tensor<double> x(spec.input_shape, 0.3);
  const Tensor<double> y0 = forward(spec, w, x, false).output;
  w.view("head.bias")[0] += 0.5;
  const Tensor<double> y1 = forward(spec, w, x, false).output;
  for (std::size_t i = 0; i < y0.size(); ++i) CHECK(y1[i] - y0[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("specs round-trip through text and fingerprint stably") {
  for (BackboneKind kind : {BackboneKind::fas_dr_light, BackboneKind::fas_dr}) {
    const NetworkSpec spec = build_backbone(kind, 2, {3, 128, 128}, {3, 5, 7});
    const NetworkSpec back = parse_spec(serialize_spec(spec));
    CHECK(back == spec);
    CHECK(spec_fingerprint(back) == spec_fingerprint(spec));
    CHECK(spec_fingerprint(spec).size() == 64);
  }
  const NetworkSpec a = build_backbone(BackboneKind::fas_dr, 1, {3, 64, 64});
  const NetworkSpec b = build_backbone(BackboneKind::fas_dr, 2, {3, 64, 64});
  CHECK(spec_fingerprint(a) != spec_fingerprint(b));
  CHECK(parse_spec(serialize_spec(scalar_toy_spec())) == scalar_toy_spec());
  CHECK_THROWS(parse_spec("kind = fas_dr\nbogus = 1\n"));
}

TEST_CASE("float forward tracks double forward") {
  const NetworkSpec spec = build_backbone(BackboneKind::fas_dr, 1, {3, 32, 32}, {4, 4, 4});
  const auto w = init_weights<double>(spec, 8);
  Rng rng(1);
  Tensor<double> x(spec.input_shape);
  for (double& v : x.data()) v = rng.uniform();
  const Tensor<double> yd = forward(spec, w, x, false).output;
  const Tensor<float> yf = forward(spec, w.cast<float>(), x.cast<float>(), false).output;
  for (std::size_t i = 0; i < yd.size(); ++i) CHECK(std::abs(yd[i] - yf[i]) < 1e-4);
}

}  // TEST_SUITE

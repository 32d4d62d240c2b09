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
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mtfas/tape.hpp"
#include "mtfas/tensor.hpp"
#include "mtfas/weights.hpp"

namespace mtfas {

enum class BackboneKind { fas_dr_light, fas_dr, custom };

std::string_view backbone_name(BackboneKind kind);
BackboneKind parse_backbone(std::string_view name);

enum class LayerKind { conv, relu, max_pool, resize, concat };

struct LayerDesc {
  LayerKind kind = LayerKind::conv;
  std::string name;
  /// Indices of earlier layers; -1 is the network input. Empty means "the
  /// previous layer" (or the input for the first layer).
  std::vector<int> inputs;
  std::size_t filters = 0;  // conv
  std::size_t kernel = 3;   // conv
  std::size_t stride = 1;   // conv; only 1 is supported
  std::size_t out_h = 0;    // resize
  std::size_t out_w = 0;    // resize

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

struct NetworkSpec {
  BackboneKind kind = BackboneKind::custom;
  std::size_t width_scale = 1;
  std::vector<std::size_t> widths;  // base widths before scaling
  Shape input_shape;                // (C, H, W)
  Shape output_shape;               // (1, H/8, W/8) for the built-in backbones
  std::vector<LayerDesc> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Default base widths: fas_dr_light {8, 16, 16}, fas_dr {16, 32, 64}.
std::vector<std::size_t> default_widths(BackboneKind kind);

/// fas_dr_light: stem conv, three (conv, conv, pool) blocks, 1-channel head conv.
/// fas_dr: stem conv, three (conv x3, pool) blocks whose outputs are resized to
/// H/8 x W/8 and concatenated, then two head convs down to one channel.
/// Every non-head width is multiplied by width_scale.
NetworkSpec build_backbone(BackboneKind kind, std::size_t width_scale, const Shape& input_shape,
                           std::vector<std::size_t> widths = {});

/// Output shape of every layer; throws ShapeError on an inconsistent spec.
std::vector<Shape> propagate_shapes(const NetworkSpec& spec);

/// Propagates shapes and checks the declared output shape.
void validate_spec(const NetworkSpec& spec);

/// Parameter views in layer order: "<layer>.weight" (O, C, K, K), "<layer>.bias" (O).
std::shared_ptr<const ParamLayout> param_layout(const NetworkSpec& spec);

std::string serialize_spec(const NetworkSpec& spec);
NetworkSpec parse_spec(std::string_view text);

/// Hex SHA-256 of serialize_spec(spec).
std::string spec_fingerprint(const NetworkSpec& spec);

/// Uniform in +-sqrt(6 / fan_in) for weights, zero biases.
template <typename T>
WeightBundle<T> init_weights(const NetworkSpec& spec, std::uint64_t seed);

/// Appends the network to `tape`, reading its input from node `input`.
/// Returns the output node.
template <typename T>
NodeId build_forward(Tape<T>& tape, const NetworkSpec& spec, const WeightBundle<T>& weights,
                     NodeId input);

template <typename T>
struct ForwardResult {
  Tensor<T> output;
  std::optional<Tape<T>> tape;
};

template <typename T>
ForwardResult<T> forward(const NetworkSpec& spec, const WeightBundle<T>& weights,
                         const Tensor<T>& input, bool record);

}  // namespace mtfas

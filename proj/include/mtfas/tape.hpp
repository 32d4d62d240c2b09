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

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "mtfas/tensor.hpp"
#include "mtfas/weights.hpp"

namespace mtfas {

enum class Op : std::uint8_t {
  input,
  param,
  conv2d,
  max_pool2,
  relu,
  sigmoid,
  resize_nearest,
  concat,
  add,
  sub,
  mul,
  scale,
  mean,
};

std::string_view op_name(Op op);

using NodeId = std::size_t;

/// Eagerly evaluated computation record over one parameter layout.
///
/// Every builder method computes its value immediately and appends a node, so
/// nodes are topologically ordered by construction. Values are checked for
/// finiteness as they are produced. The last node created is the output unless
/// set_output() says otherwise.
template <typename T>
class Tape {
 public:
  struct Node {
    Op op = Op::input;
    std::array<NodeId, 3> args{};
    std::vector<NodeId> list;  // concat operands
    std::size_t view = 0;      // param view index
    T factor = T(1);           // scale
    std::vector<std::size_t> axes;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
    bool requires_grad = false;
    Tensor<T> value;
    std::vector<std::uint32_t> argmax;
  };

  Tape() = default;
  explicit Tape(std::shared_ptr<const ParamLayout> layout) : layout_(std::move(layout)) {}

  NodeId input(Tensor<T> value);
  NodeId param(const WeightBundle<T>& weights, std::size_t view_index);

  /// Kernel size comes from the weight's (O, C, K, K) shape; bias is (O).
  NodeId conv2d(NodeId x, NodeId weight, NodeId bias);
  NodeId max_pool2(NodeId x);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId resize_nearest(NodeId x, std::size_t height, std::size_t width);
  /// Channel concatenation of rank-3 tensors with equal spatial size.
  NodeId concat(const std::vector<NodeId>& xs);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, T factor);
  /// Mean over a set of axes; the result drops those axes.
  NodeId mean(NodeId a, std::vector<std::size_t> axes);
  NodeId mean_all(NodeId a);

  void set_output(NodeId id);
  NodeId output() const;

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Layout of the parameters this tape reads; null when it reads none.
  const std::shared_ptr<const ParamLayout>& layout() const { return layout_; }
  bool uses_params() const { return uses_params_; }

  /// Re-evaluates every node with `weights` substituted for the recorded
  /// parameters and returns the output value.
  Tensor<T> replay(const WeightBundle<T>& weights) const;

 private:
  NodeId push(Node node);
  void compute(Node& node, const std::vector<const Tensor<T>*>& vals) const;
  const Tensor<T>& arg_value(const Node& n, std::size_t i) const { return nodes_[n.args[i]].value; }

  std::shared_ptr<const ParamLayout> layout_;
  std::vector<Node> nodes_;
  std::size_t output_ = SIZE_MAX;
  bool uses_params_ = false;
};

/// d(scalar)/d(wrt) in the layout of wrt.flat. Parameters the scalar does not
/// depend on receive exact zeros.
template <typename T>
Tensor<T> grad(const Tape<T>& tape, NodeId scalar, const WeightBundle<T>& wrt);

/// Directional derivative of the tape output along `direction` (forward mode).
template <typename T>
Tensor<T> jvp(const Tape<T>& tape, const WeightBundle<T>& wrt, const Tensor<T>& direction);

/// cotangent^T * J of the tape output, in the layout of wrt.flat.
template <typename T>
Tensor<T> vjp(const Tape<T>& tape, const WeightBundle<T>& wrt, const Tensor<T>& cotangent);

}  // namespace mtfas

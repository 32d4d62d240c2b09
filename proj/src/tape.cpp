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

#include "mtfas/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtfas/kernels.hpp"

namespace mtfas {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::param: return "param";
    case Op::conv2d: return "conv2d";
    case Op::max_pool2: return "max_pool2";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::resize_nearest: return "resize_nearest";
    case Op::concat: return "concat";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::mean: return "mean";
  }
  return "unknown";
}

namespace {

template <typename T>
kernels::ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w) {
  return {x.dim(0), w.dim(0), x.dim(1), x.dim(2), w.dim(2)};
}

/// For mean over `axes`: the output shape and, per input element, its output index.
struct Reduction {
  Shape out_shape;
  std::vector<std::size_t> out_index;
  std::size_t count = 1;
};

Reduction make_reduction(const Shape& in, const std::vector<std::size_t>& axes) {
  Reduction r;
  std::vector<bool> reduced(in.size(), false);
  for (std::size_t a : axes) reduced[a] = true;
  Shape out_strides_full(in.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = in.size(); k-- > 0;) {
    if (reduced[k]) {
      r.count *= in[k];
    } else {
      out_strides_full[k] = stride;
      stride *= in[k];
    }
  }
  for (std::size_t k = 0; k < in.size(); ++k) {
    if (!reduced[k]) r.out_shape.push_back(in[k]);
  }
  const std::size_t n = shape_size(in);
  r.out_index.resize(n);
  std::vector<std::size_t> idx(in.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < in.size(); ++k) o += idx[k] * out_strides_full[k];
    r.out_index[flat] = o;
    for (std::size_t k = in.size(); k-- > 0;) {
      if (++idx[k] < in[k]) break;
      idx[k] = 0;
    }
  }
  return r;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, Op op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(op)) + ": shape " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
T sigmoid_scalar(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

/// Computes a node's value from its operand values. Params are handled by the caller.
template <typename T>
Tensor<T> evaluate(const typename Tape<T>::Node& n, const std::vector<const Tensor<T>*>& v,
                   std::vector<std::uint32_t>* argmax) {
  switch (n.op) {
    case Op::input:
    case Op::param:
      break;
    case Op::conv2d: {
      const Tensor<T>& x = *v[0];
      const Tensor<T>& w = *v[1];
      const Tensor<T>& b = *v[2];
      const auto d = conv_dims(x, w);
      Tensor<T> y(Shape{d.out_channels, d.height, d.width});
      kernels::conv2d_forward<T>(d, x.data(), w.data(), b.data(), y.data());
      return y;
    }
    case Op::max_pool2: {
      const Tensor<T>& x = *v[0];
      const kernels::PoolDims d{x.dim(0), x.dim(1), x.dim(2)};
      Tensor<T> y(Shape{d.channels, d.height / 2, d.width / 2});
      argmax->assign(y.size(), 0);
      kernels::max_pool2_forward<T>(d, x.data(), y.data(), *argmax);
      return y;
    }
    case Op::relu: {
      Tensor<T> y = *v[0];
      for (T& e : y.data()) e = e > T(0) ? e : T(0);
      return y;
    }
    case Op::sigmoid: {
      Tensor<T> y = *v[0];
      for (T& e : y.data()) e = sigmoid_scalar(e);
      return y;
    }
    case Op::resize_nearest: {
      const Tensor<T>& x = *v[0];
      const std::size_t C = x.dim(0), h = x.dim(1), w = x.dim(2);
      Tensor<T> y(Shape{C, n.out_h, n.out_w});
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < n.out_h; ++i)
          for (std::size_t j = 0; j < n.out_w; ++j)
            y.at(c, i, j) = x.at(c, i * h / n.out_h, j * w / n.out_w);
      return y;
    }
    case Op::concat: {
      std::size_t C = 0;
      for (const Tensor<T>* t : v) C += t->dim(0);
      Tensor<T> y(Shape{C, v[0]->dim(1), v[0]->dim(2)});
      std::size_t off = 0;
      for (const Tensor<T>* t : v) {
        std::copy(t->data().begin(), t->data().end(), y.data().begin() + off);
        off += t->size();
      }
      return y;
    }
    case Op::add: {
      Tensor<T> y = *v[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += (*v[1])[i];
      return y;
    }
    case Op::sub: {
      Tensor<T> y = *v[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] -= (*v[1])[i];
      return y;
    }
    case Op::mul: {
      Tensor<T> y = *v[0];
      for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*v[1])[i];
      return y;
    }
    case Op::scale: {
      Tensor<T> y = *v[0];
      for (T& e : y.data()) e *= n.factor;
      return y;
    }
    case Op::mean: {
      const Reduction r = make_reduction(v[0]->shape(), n.axes);
      Tensor<T> y(r.out_shape);
      for (std::size_t i = 0; i < v[0]->size(); ++i) y[r.out_index[i]] += (*v[0])[i];
      for (T& e : y.data()) e /= static_cast<T>(r.count);
      return y;
    }
  }
  throw std::logic_error("evaluate: unhandled op");
}

template <typename T>
std::vector<const Tensor<T>*> operand_values(const typename Tape<T>::Node& n,
                                             const std::vector<const Tensor<T>*>& all) {
  std::vector<const Tensor<T>*> v;
  switch (n.op) {
    case Op::input:
    case Op::param:
      break;
    case Op::conv2d:
      v = {all[n.args[0]], all[n.args[1]], all[n.args[2]]};
      break;
    case Op::add:
    case Op::sub:
    case Op::mul:
      v = {all[n.args[0]], all[n.args[1]]};
      break;
    case Op::concat:
      for (NodeId id : n.list) v.push_back(all[id]);
      break;
    default:
      v = {all[n.args[0]]};
      break;
  }
  return v;
}

}  // namespace

template <typename T>
NodeId Tape<T>::push(Node node) {
  std::vector<const Tensor<T>*> all;
  all.reserve(nodes_.size());
  for (const Node& n : nodes_) all.push_back(&n.value);
  // Only operand pointers are read, so build them directly.
  std::vector<const Tensor<T>*> vals = operand_values<T>(node, all);
  if (node.op != Op::input && node.op != Op::param) {
    node.value = evaluate<T>(node, vals, &node.argmax);
    bool rg = false;
    for (NodeId id : (node.op == Op::concat ? node.list : std::vector<NodeId>{}))
      rg = rg || nodes_[id].requires_grad;
    if (node.op != Op::concat) {
      const std::size_t arity = node.op == Op::conv2d ? 3
                                : (node.op == Op::add || node.op == Op::sub || node.op == Op::mul)
                                    ? 2
                                    : 1;
      for (std::size_t i = 0; i < arity; ++i) rg = rg || nodes_[node.args[i]].requires_grad;
    }
    node.requires_grad = rg;
  }
  if (!node.value.all_finite()) {
    throw NumericalError("non-finite value produced by " + std::string(op_name(node.op)) +
                         " (node " + std::to_string(nodes_.size()) + ")");
  }
  nodes_.push_back(std::move(node));
  output_ = nodes_.size() - 1;
  return output_;
}

template <typename T>
NodeId Tape<T>::input(Tensor<T> value) {
  Node n;
  n.op = Op::input;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::param(const WeightBundle<T>& weights, std::size_t view_index) {
  if (!layout_) {
    layout_ = weights.layout_ptr();
  } else if (!(layout_ == weights.layout_ptr() || *layout_ == weights.layout())) {
    throw ShapeError("tape already bound to a different parameter layout");
  }
  const ParamView& pv = layout_->views().at(view_index);
  auto span = weights.view(view_index);
  Node n;
  n.op = Op::param;
  n.view = view_index;
  n.requires_grad = true;
  n.value = Tensor<T>(pv.shape, std::vector<T>(span.begin(), span.end()));
  uses_params_ = true;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::conv2d(NodeId x, NodeId weight, NodeId bias) {
  const Tensor<T>& xv = value(x);
  const Tensor<T>& wv = value(weight);
  const Tensor<T>& bv = value(bias);
  if (xv.rank() != 3 || wv.rank() != 4 || bv.rank() != 1 || wv.dim(1) != xv.dim(0) ||
      wv.dim(2) != wv.dim(3) || wv.dim(2) % 2 == 0 || bv.dim(0) != wv.dim(0)) {
    throw ShapeError("conv2d: input " + shape_str(xv.shape()) + ", weight " +
                     shape_str(wv.shape()) + ", bias " + shape_str(bv.shape()));
  }
  Node n;
  n.op = Op::conv2d;
  n.args = {x, weight, bias};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::max_pool2(NodeId x) {
  const Tensor<T>& xv = value(x);
  if (xv.rank() != 3 || xv.dim(1) % 2 != 0 || xv.dim(2) % 2 != 0) {
    throw ShapeError("max_pool2: input " + shape_str(xv.shape()));
  }
  Node n;
  n.op = Op::max_pool2;
  n.args = {x, 0, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::relu(NodeId x) {
  Node n;
  n.op = Op::relu;
  n.args = {x, 0, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::sigmoid(NodeId x) {
  Node n;
  n.op = Op::sigmoid;
  n.args = {x, 0, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::resize_nearest(NodeId x, std::size_t height, std::size_t width) {
  if (value(x).rank() != 3 || height == 0 || width == 0) {
    throw ShapeError("resize_nearest: input " + shape_str(value(x).shape()));
  }
  Node n;
  n.op = Op::resize_nearest;
  n.args = {x, 0, 0};
  n.out_h = height;
  n.out_w = width;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::concat(const std::vector<NodeId>& xs) {
  if (xs.empty()) throw ShapeError("concat: no operands");
  for (NodeId id : xs) {
    const Tensor<T>& v = value(id);
    if (v.rank() != 3 || v.dim(1) != value(xs[0]).dim(1) || v.dim(2) != value(xs[0]).dim(2)) {
      throw ShapeError("concat: operand " + shape_str(v.shape()) + " vs " +
                       shape_str(value(xs[0]).shape()));
    }
  }
  Node n;
  n.op = Op::concat;
  n.list = xs;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), Op::add);
  Node n;
  n.op = Op::add;
  n.args = {a, b, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::sub(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), Op::sub);
  Node n;
  n.op = Op::sub;
  n.args = {a, b, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::mul(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), Op::mul);
  Node n;
  n.op = Op::mul;
  n.args = {a, b, 0};
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::scale(NodeId a, T factor) {
  Node n;
  n.op = Op::scale;
  n.args = {a, 0, 0};
  n.factor = factor;
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::mean(NodeId a, std::vector<std::size_t> axes) {
  const std::size_t r = value(a).rank();
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (std::size_t ax : axes) {
    if (ax >= r) throw ShapeError("mean: axis " + std::to_string(ax) + " out of range");
  }
  Node n;
  n.op = Op::mean;
  n.args = {a, 0, 0};
  n.axes = std::move(axes);
  return push(std::move(n));
}

template <typename T>
NodeId Tape<T>::mean_all(NodeId a) {
  std::vector<std::size_t> axes(value(a).rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return mean(a, std::move(axes));
}

template <typename T>
void Tape<T>::set_output(NodeId id) {
  if (id >= nodes_.size()) throw std::out_of_range("set_output: no such node");
  output_ = id;
}

template <typename T>
NodeId Tape<T>::output() const {
  if (nodes_.empty()) throw std::logic_error("empty tape has no output");
  return output_;
}

template <typename T>
Tensor<T> Tape<T>::replay(const WeightBundle<T>& weights) const {
  if (uses_params_ && !(layout_ == weights.layout_ptr() || *layout_ == weights.layout())) {
    throw ShapeError("replay: weights do not match the tape's layout");
  }
  const NodeId out = output();
  std::vector<Tensor<T>> values(out + 1);
  std::vector<const Tensor<T>*> all(out + 1, nullptr);
  std::vector<std::uint32_t> argmax;
  for (NodeId i = 0; i <= out; ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::input) {
      all[i] = &n.value;
      continue;
    }
    if (n.op == Op::param) {
      auto span = weights.view(n.view);
      values[i] = Tensor<T>(n.value.shape(), std::vector<T>(span.begin(), span.end()));
    } else {
      values[i] = evaluate<T>(n, operand_values<T>(n, all), &argmax);
    }
    values[i].check_finite("replay of " + std::string(op_name(n.op)));
    all[i] = &values[i];
  }
  return *all[out];
}

// ---------------------------------------------------------------------------
// Reverse mode

namespace {

template <typename T>
void accumulate(std::vector<Tensor<T>>& adj, std::vector<bool>& has, NodeId id,
                const Tensor<T>& contribution) {
  if (!has[id]) {
    adj[id] = contribution;
    has[id] = true;
    return;
  }
  Tensor<T>& a = adj[id];
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += contribution[i];
}

template <typename T>
void require_layout(const Tape<T>& tape, const WeightBundle<T>& wrt, std::string_view what) {
  if (!tape.uses_params()) {
    throw ShapeError(std::string(what) + ": tape does not read any parameters");
  }
  if (!(tape.layout() == wrt.layout_ptr() || *tape.layout() == wrt.layout())) {
    throw ShapeError(std::string(what) + ": tape does not contain the requested parameters");
  }
}

template <typename T>
Tensor<T> backward(const Tape<T>& tape, NodeId root, const Tensor<T>& seed,
                   const WeightBundle<T>& wrt) {
  using Node = typename Tape<T>::Node;
  Tensor<T> out(Shape{std::max<std::size_t>(wrt.size(), 1)});
  std::vector<Tensor<T>> adj(root + 1);
  std::vector<bool> has(root + 1, false);
  adj[root] = seed;
  has[root] = true;

  auto needs = [&](NodeId id) { return tape.node(id).requires_grad; };

  for (NodeId i = root + 1; i-- > 0;) {
    if (!has[i]) continue;
    const Node& n = tape.node(i);
    const Tensor<T>& g = adj[i];
    switch (n.op) {
      case Op::input:
        break;
      case Op::param: {
        const std::size_t off = wrt.layout().views()[n.view].offset;
        for (std::size_t k = 0; k < g.size(); ++k) out[off + k] += g[k];
        break;
      }
      case Op::conv2d: {
        const Tensor<T>& x = tape.value(n.args[0]);
        const Tensor<T>& w = tape.value(n.args[1]);
        const auto d = conv_dims(x, w);
        if (needs(n.args[0])) {
          Tensor<T> gx(x.shape());
          kernels::conv2d_backward_input<T>(d, g.data(), w.data(), gx.data());
          accumulate(adj, has, n.args[0], gx);
        }
        if (needs(n.args[1]) || needs(n.args[2])) {
          Tensor<T> gw(w.shape());
          Tensor<T> gb(Shape{w.dim(0)});
          kernels::conv2d_backward_weight<T>(d, g.data(), x.data(), gw.data(), gb.data());
          if (needs(n.args[1])) accumulate(adj, has, n.args[1], gw);
          if (needs(n.args[2])) accumulate(adj, has, n.args[2], gb);
        }
        break;
      }
      case Op::max_pool2: {
        if (!needs(n.args[0])) break;
        Tensor<T> gx(tape.value(n.args[0]).shape());
        for (std::size_t k = 0; k < g.size(); ++k) gx[n.argmax[k]] += g[k];
        accumulate(adj, has, n.args[0], gx);
        break;
      }
      case Op::relu: {
        if (!needs(n.args[0])) break;
        const Tensor<T>& x = tape.value(n.args[0]);
        Tensor<T> gx(x.shape());
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] = x[k] > T(0) ? g[k] : T(0);
        accumulate(adj, has, n.args[0], gx);
        break;
      }
      case Op::sigmoid: {
        if (!needs(n.args[0])) break;
        const Tensor<T>& s = n.value;
        Tensor<T> gx(s.shape());
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] = g[k] * (s[k] * (T(1) - s[k]));
        accumulate(adj, has, n.args[0], gx);
        break;
      }
      case Op::resize_nearest: {
        if (!needs(n.args[0])) break;
        const Tensor<T>& x = tape.value(n.args[0]);
        const std::size_t C = x.dim(0), h = x.dim(1), w = x.dim(2);
        Tensor<T> gx(x.shape());
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t a = 0; a < n.out_h; ++a)
            for (std::size_t b = 0; b < n.out_w; ++b)
              gx.at(c, a * h / n.out_h, b * w / n.out_w) += g.at(c, a, b);
        accumulate(adj, has, n.args[0], gx);
        break;
      }
      case Op::concat: {
        std::size_t off = 0;
        for (NodeId id : n.list) {
          const Tensor<T>& v = tape.value(id);
          if (needs(id)) {
            Tensor<T> part(v.shape(),
                           std::vector<T>(g.data().begin() + off, g.data().begin() + off + v.size()));
            accumulate(adj, has, id, part);
          }
          off += v.size();
        }
        break;
      }
      case Op::add:
        if (needs(n.args[0])) accumulate(adj, has, n.args[0], g);
        if (needs(n.args[1])) accumulate(adj, has, n.args[1], g);
        break;
      case Op::sub:
        if (needs(n.args[0])) accumulate(adj, has, n.args[0], g);
        if (needs(n.args[1])) {
          Tensor<T> neg = g;
          for (T& e : neg.data()) e = -e;
          accumulate(adj, has, n.args[1], neg);
        }
        break;
      case Op::mul: {
        const Tensor<T>& a = tape.value(n.args[0]);
        const Tensor<T>& b = tape.value(n.args[1]);
        if (needs(n.args[0])) {
          Tensor<T> ga(a.shape());
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] = g[k] * b[k];
          accumulate(adj, has, n.args[0], ga);
        }
        if (needs(n.args[1])) {
          Tensor<T> gb(b.shape());
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] = g[k] * a[k];
          accumulate(adj, has, n.args[1], gb);
        }
        break;
      }
      case Op::scale: {
        if (!needs(n.args[0])) break;
        Tensor<T> ga = g;
        for (T& e : ga.data()) e *= n.factor;
        accumulate(adj, has, n.args[0], ga);
        break;
      }
      case Op::mean: {
        if (!needs(n.args[0])) break;
        const Tensor<T>& a = tape.value(n.args[0]);
        const Reduction r = make_reduction(a.shape(), n.axes);
        Tensor<T> ga(a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) ga[k] = g[r.out_index[k]] / static_cast<T>(r.count);
        accumulate(adj, has, n.args[0], ga);
        break;
      }
    }
    // Adjoints of consumed nodes are no longer needed.
    adj[i] = Tensor<T>();
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> grad(const Tape<T>& tape, NodeId scalar, const WeightBundle<T>& wrt) {
  require_layout(tape, wrt, "grad");
  if (scalar >= tape.size()) throw std::out_of_range("grad: no such node");
  if (tape.value(scalar).rank() != 0) {
    throw ShapeError("grad: output of shape " + shape_str(tape.value(scalar).shape()) +
                     " is not a scalar");
  }
  return backward(tape, scalar, Tensor<T>::scalar(T(1)), wrt);
}

template <typename T>
Tensor<T> vjp(const Tape<T>& tape, const WeightBundle<T>& wrt, const Tensor<T>& cotangent) {
  require_layout(tape, wrt, "vjp");
  const NodeId out = tape.output();
  if (cotangent.shape() != tape.value(out).shape()) {
    throw ShapeError("vjp: cotangent shape " + shape_str(cotangent.shape()) +
                     " vs output shape " + shape_str(tape.value(out).shape()));
  }
  return backward(tape, out, cotangent, wrt);
}

// ---------------------------------------------------------------------------
// Forward mode

template <typename T>
Tensor<T> jvp(const Tape<T>& tape, const WeightBundle<T>& wrt, const Tensor<T>& direction) {
  using Node = typename Tape<T>::Node;
  require_layout(tape, wrt, "jvp");
  if (direction.rank() != 1 || direction.size() != std::max<std::size_t>(wrt.size(), 1)) {
    throw ShapeError("jvp: direction of shape " + shape_str(direction.shape()) +
                     " does not match " + std::to_string(wrt.size()) + " parameters");
  }
  const NodeId out = tape.output();
  std::vector<Tensor<T>> tan(out + 1);

  for (NodeId i = 0; i <= out; ++i) {
    const Node& n = tape.node(i);
    if (!n.requires_grad) continue;  // tangent is identically zero
    auto has = [&](NodeId id) { return tape.node(id).requires_grad; };
    auto zero_like = [&](NodeId id) { return Tensor<T>(tape.value(id).shape()); };
    switch (n.op) {
      case Op::input:
        break;
      case Op::param: {
        const std::size_t off = wrt.layout().views()[n.view].offset;
        Tensor<T> t(n.value.shape());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = direction[off + k];
        tan[i] = std::move(t);
        break;
      }
      case Op::conv2d: {
        const Tensor<T>& x = tape.value(n.args[0]);
        const Tensor<T>& w = tape.value(n.args[1]);
        const auto d = conv_dims(x, w);
        Tensor<T> t(n.value.shape());
        if (has(n.args[1]) || has(n.args[2])) {
          const Tensor<T> tw = has(n.args[1]) ? tan[n.args[1]] : zero_like(n.args[1]);
          const Tensor<T> tb = has(n.args[2]) ? tan[n.args[2]] : zero_like(n.args[2]);
          kernels::conv2d_forward<T>(d, x.data(), tw.data(), tb.data(), t.data());
        }
        if (has(n.args[0])) {
          Tensor<T> tx(n.value.shape());
          kernels::conv2d_forward<T>(d, tan[n.args[0]].data(), w.data(), std::span<const T>{},
                                     tx.data());
          for (std::size_t k = 0; k < t.size(); ++k) t[k] += tx[k];
        }
        tan[i] = std::move(t);
        break;
      }
      case Op::max_pool2: {
        Tensor<T> t(n.value.shape());
        const Tensor<T>& tx = tan[n.args[0]];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = tx[n.argmax[k]];
        tan[i] = std::move(t);
        break;
      }
      case Op::relu: {
        const Tensor<T>& x = tape.value(n.args[0]);
        Tensor<T> t = tan[n.args[0]];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = x[k] > T(0) ? t[k] : T(0);
        tan[i] = std::move(t);
        break;
      }
      case Op::sigmoid: {
        const Tensor<T>& s = n.value;
        Tensor<T> t = tan[n.args[0]];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = t[k] * (s[k] * (T(1) - s[k]));
        tan[i] = std::move(t);
        break;
      }
      case Op::resize_nearest: {
        const Tensor<T>& tx = tan[n.args[0]];
        const std::size_t C = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
        Tensor<T> t(n.value.shape());
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t a = 0; a < n.out_h; ++a)
            for (std::size_t b = 0; b < n.out_w; ++b)
              t.at(c, a, b) = tx.at(c, a * h / n.out_h, b * w / n.out_w);
        tan[i] = std::move(t);
        break;
      }
      case Op::concat: {
        Tensor<T> t(n.value.shape());
        std::size_t off = 0;
        for (NodeId id : n.list) {
          const std::size_t sz = tape.value(id).size();
          if (has(id)) std::copy(tan[id].data().begin(), tan[id].data().end(), t.data().begin() + off);
          off += sz;
        }
        tan[i] = std::move(t);
        break;
      }
      case Op::add:
      case Op::sub: {
        Tensor<T> t(n.value.shape());
        const T sign = n.op == Op::add ? T(1) : T(-1);
        if (has(n.args[0])) t = tan[n.args[0]];
        if (has(n.args[1])) {
          const Tensor<T>& tb = tan[n.args[1]];
          for (std::size_t k = 0; k < t.size(); ++k) t[k] += sign * tb[k];
        }
        tan[i] = std::move(t);
        break;
      }
      case Op::mul: {
        const Tensor<T>& a = tape.value(n.args[0]);
        const Tensor<T>& b = tape.value(n.args[1]);
        Tensor<T> t(n.value.shape());
        if (has(n.args[0])) {
          const Tensor<T>& ta = tan[n.args[0]];
          for (std::size_t k = 0; k < t.size(); ++k) t[k] = ta[k] * b[k];
        }
        if (has(n.args[1])) {
          const Tensor<T>& tb = tan[n.args[1]];
          for (std::size_t k = 0; k < t.size(); ++k) t[k] += a[k] * tb[k];
        }
        tan[i] = std::move(t);
        break;
      }
      case Op::scale: {
        Tensor<T> t = tan[n.args[0]];
        for (T& e : t.data()) e *= n.factor;
        tan[i] = std::move(t);
        break;
      }
      case Op::mean: {
        const Tensor<T>& ta = tan[n.args[0]];
        const Reduction r = make_reduction(ta.shape(), n.axes);
        Tensor<T> t(r.out_shape);
        for (std::size_t k = 0; k < ta.size(); ++k) t[r.out_index[k]] += ta[k];
        for (T& e : t.data()) e /= static_cast<T>(r.count);
        tan[i] = std::move(t);
        break;
      }
    }
  }
  if (!tape.node(out).requires_grad) return Tensor<T>(tape.value(out).shape());
  return tan[out];
}

template class Tape<float>;
template class Tape<double>;
template Tensor<float> grad(const Tape<float>&, NodeId, const WeightBundle<float>&);
template Tensor<double> grad(const Tape<double>&, NodeId, const WeightBundle<double>&);
template Tensor<float> jvp(const Tape<float>&, const WeightBundle<float>&, const Tensor<float>&);
template Tensor<double> jvp(const Tape<double>&, const WeightBundle<double>&, const Tensor<double>&);
template Tensor<float> vjp(const Tape<float>&, const WeightBundle<float>&, const Tensor<float>&);
template Tensor<double> vjp(const Tape<double>&, const WeightBundle<double>&, const Tensor<double>&);

}  // namespace mtfas

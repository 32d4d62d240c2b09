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

#include "mtfas/network.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mtfas/rng.hpp"
#include "mtfas/sha256.hpp"

namespace mtfas {

std::string_view backbone_name(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::fas_dr_light: return "fas_dr_light";
    case BackboneKind::fas_dr: return "fas_dr";
    case BackboneKind::custom: return "custom";
  }
  return "custom";
}

BackboneKind parse_backbone(std::string_view name) {
  if (name == "fas_dr_light") return BackboneKind::fas_dr_light;
  if (name == "fas_dr") return BackboneKind::fas_dr;
  if (name == "custom") return BackboneKind::custom;
  throw std::invalid_argument("unknown backbone '" + std::string(name) + "'");
}

namespace {

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::resize: return "resize";
    case LayerKind::concat: return "concat";
  }
  return "conv";
}

LayerKind parse_layer_kind(std::string_view s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "relu") return LayerKind::relu;
  if (s == "max_pool") return LayerKind::max_pool;
  if (s == "resize") return LayerKind::resize;
  if (s == "concat") return LayerKind::concat;
  throw std::invalid_argument("unknown layer kind '" + std::string(s) + "'");
}

std::vector<int> resolved_inputs(const NetworkSpec& spec, std::size_t i) {
  const LayerDesc& l = spec.layers[i];
  if (!l.inputs.empty()) return l.inputs;
  return {static_cast<int>(i) - 1};
}

class Builder {
 public:
  explicit Builder(NetworkSpec& spec) : spec_(spec) {}

  int conv(std::string name, std::size_t filters, int input = kPrev, std::size_t kernel = 3) {
    LayerDesc l;
    l.kind = LayerKind::conv;
    l.name = std::move(name);
    l.filters = filters;
    l.kernel = kernel;
    if (input != kPrev) l.inputs = {input};
    return push(std::move(l));
  }
  int relu(std::string name) { return simple(LayerKind::relu, std::move(name)); }
  int pool(std::string name) { return simple(LayerKind::max_pool, std::move(name)); }
  int resize(std::string name, int input, std::size_t h, std::size_t w) {
    LayerDesc l;
    l.kind = LayerKind::resize;
    l.name = std::move(name);
    l.inputs = {input};
    l.out_h = h;
    l.out_w = w;
    return push(std::move(l));
  }
  int concat(std::string name, std::vector<int> inputs) {
    LayerDesc l;
    l.kind = LayerKind::concat;
    l.name = std::move(name);
    l.inputs = std::move(inputs);
    return push(std::move(l));
  }

  static constexpr int kPrev = -2;

 private:
  int simple(LayerKind k, std::string name) {
    LayerDesc l;
    l.kind = k;
    l.name = std::move(name);
    return push(std::move(l));
  }
  int push(LayerDesc l) {
    spec_.layers.push_back(std::move(l));
    return static_cast<int>(spec_.layers.size()) - 1;
  }
  NetworkSpec& spec_;
};

}  // namespace

std::vector<std::size_t> default_widths(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::fas_dr_light: return {8, 16, 16};
    case BackboneKind::fas_dr: return {16, 32, 64};
    case BackboneKind::custom: break;
  }
  throw std::invalid_argument("custom networks have no default widths");
}

NetworkSpec build_backbone(BackboneKind kind, std::size_t width_scale, const Shape& input_shape,
                           std::vector<std::size_t> widths) {
  if (kind == BackboneKind::custom) throw std::invalid_argument("build_backbone: custom kind");
  if (width_scale == 0) throw std::invalid_argument("build_backbone: width_scale must be >= 1");
  if (input_shape.size() != 3 || input_shape[0] == 0) {
    throw ShapeError("build_backbone: input must be (C, H, W), got " + shape_str(input_shape));
  }
  const std::size_t H = input_shape[1], W = input_shape[2];
  if (H == 0 || W == 0 || H % 8 != 0 || W % 8 != 0) {
    throw ShapeError("build_backbone: input " + shape_str(input_shape) +
                     " is not divisible by 8");
  }
  if (widths.empty()) widths = default_widths(kind);
  if (widths.size() != 3) throw std::invalid_argument("build_backbone: expected 3 block widths");
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("build_backbone: zero width");
  }

  NetworkSpec spec;
  spec.kind = kind;
  spec.width_scale = width_scale;
  spec.widths = widths;
  spec.input_shape = input_shape;
  spec.output_shape = {1, H / 8, W / 8};

  Builder b(spec);
  const std::size_t s = width_scale;
  b.conv("stem", widths[0] * s, -1);
  b.relu("stem.relu");
  if (kind == BackboneKind::fas_dr_light) {
    for (std::size_t blk = 0; blk < 3; ++blk) {
      const std::string p = "block" + std::to_string(blk + 1);
      for (int c = 1; c <= 2; ++c) {
        b.conv(p + ".conv" + std::to_string(c), widths[blk] * s);
        b.relu(p + ".relu" + std::to_string(c));
      }
      b.pool(p + ".pool");
    }
    b.conv("head", 1);
  } else {
    std::vector<int> taps;
    for (std::size_t blk = 0; blk < 3; ++blk) {
      const std::string p = "block" + std::to_string(blk + 1);
      for (int c = 1; c <= 3; ++c) {
        b.conv(p + ".conv" + std::to_string(c), widths[blk] * s);
        b.relu(p + ".relu" + std::to_string(c));
      }
      taps.push_back(b.pool(p + ".pool"));
    }
    std::vector<int> resized;
    for (std::size_t blk = 0; blk < 3; ++blk) {
      resized.push_back(
          b.resize("block" + std::to_string(blk + 1) + ".resize", taps[blk], H / 8, W / 8));
    }
    b.concat("fuse", resized);
    b.conv("head1", widths[0] * s);
    b.relu("head1.relu");
    b.conv("head2", 1);
  }
  validate_spec(spec);
  return spec;
}

std::vector<Shape> propagate_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.size() != 3) {
    throw ShapeError("network input must be rank 3, got " + shape_str(spec.input_shape));
  }
  if (spec.layers.empty()) throw ShapeError("network has no layers");
  std::vector<Shape> out;
  out.reserve(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    std::vector<Shape> ins;
    for (int id : resolved_inputs(spec, i)) {
      if (id < -1 || id >= static_cast<int>(i)) {
        throw ShapeError("layer '" + l.name + "' reads from a later or missing layer");
      }
      ins.push_back(id == -1 ? spec.input_shape : out[static_cast<std::size_t>(id)]);
    }
    if (l.kind != LayerKind::concat && ins.size() != 1) {
      throw ShapeError("layer '" + l.name + "' takes exactly one input");
    }
    const Shape& x = ins.front();
    switch (l.kind) {
      case LayerKind::conv:
        if (l.filters == 0 || l.kernel % 2 == 0 || l.stride != 1) {
          throw ShapeError("layer '" + l.name + "': unsupported conv configuration");
        }
        out.push_back({l.filters, x[1], x[2]});
        break;
      case LayerKind::relu:
        out.push_back(x);
        break;
      case LayerKind::max_pool:
        if (x[1] % 2 != 0 || x[2] % 2 != 0) {
          throw ShapeError("layer '" + l.name + "': odd input " + shape_str(x));
        }
        out.push_back({x[0], x[1] / 2, x[2] / 2});
        break;
      case LayerKind::resize:
        if (l.out_h == 0 || l.out_w == 0) throw ShapeError("layer '" + l.name + "': zero size");
        out.push_back({x[0], l.out_h, l.out_w});
        break;
      case LayerKind::concat: {
        std::size_t c = 0;
        for (const Shape& s : ins) {
          if (s[1] != x[1] || s[2] != x[2]) {
            throw ShapeError("layer '" + l.name + "': spatial mismatch " + shape_str(s) + " vs " +
                             shape_str(x));
          }
          c += s[0];
        }
        out.push_back({c, x[1], x[2]});
        break;
      }
    }
  }
  return out;
}

void validate_spec(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  if (shapes.back() != spec.output_shape) {
    throw ShapeError("declared output shape " + shape_str(spec.output_shape) +
                     " but layers produce " + shape_str(shapes.back()));
  }
}

std::shared_ptr<const ParamLayout> param_layout(const NetworkSpec& spec) {
  const auto shapes = propagate_shapes(spec);
  auto layout = std::make_shared<ParamLayout>();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    if (l.kind != LayerKind::conv) continue;
    const int in = resolved_inputs(spec, i).front();
    const std::size_t c = in == -1 ? spec.input_shape[0] : shapes[static_cast<std::size_t>(in)][0];
    layout->add(l.name + ".weight", {l.filters, c, l.kernel, l.kernel});
    layout->add(l.name + ".bias", {l.filters});
  }
  return layout;
}

namespace {

std::string join(const std::vector<std::size_t>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s.push_back(sep);
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::size_t> split_sizes(std::string_view s, char sep) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find(sep, pos);
    if (next == std::string_view::npos) next = s.size();
    const std::string part(s.substr(pos, next - pos));
    std::size_t used = 0;
    const unsigned long long v = std::stoull(part, &used);
    if (used != part.size()) throw std::invalid_argument("bad integer '" + part + "'");
    out.push_back(static_cast<std::size_t>(v));
    pos = next + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string serialize_spec(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "kind = " << backbone_name(spec.kind) << '\n';
  os << "width_scale = " << spec.width_scale << '\n';
  os << "widths = " << join(spec.widths, ',') << '\n';
  os << "input_shape = " << join(spec.input_shape, ',') << '\n';
  os << "output_shape = " << join(spec.output_shape, ',') << '\n';
  for (const LayerDesc& l : spec.layers) {
    os << "layer = " << layer_kind_name(l.kind) << " name=" << l.name;
    if (!l.inputs.empty()) {
      os << " inputs=";
      for (std::size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "," : "") << l.inputs[i];
    }
    if (l.kind == LayerKind::conv) {
      os << " filters=" << l.filters << " kernel=" << l.kernel << " stride=" << l.stride;
    }
    if (l.kind == LayerKind::resize) os << " out=" << l.out_h << 'x' << l.out_w;
    os << '\n';
  }
  return os.str();
}

NetworkSpec parse_spec(std::string_view text) {
  NetworkSpec spec;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("spec line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key == "kind") {
      spec.kind = parse_backbone(value);
    } else if (key == "width_scale") {
      spec.width_scale = std::stoul(value);
    } else if (key == "widths") {
      spec.widths = value.empty() ? std::vector<std::size_t>{} : split_sizes(value, ',');
    } else if (key == "input_shape") {
      spec.input_shape = split_sizes(value, ',');
    } else if (key == "output_shape") {
      spec.output_shape = split_sizes(value, ',');
    } else if (key == "layer") {
      std::istringstream ls(value);
      std::string kind;
      ls >> kind;
      LayerDesc l;
      l.kind = parse_layer_kind(kind);
      std::string tok;
      while (ls >> tok) {
        const auto e = tok.find('=');
        if (e == std::string::npos) throw std::invalid_argument("bad layer token '" + tok + "'");
        const std::string k = tok.substr(0, e), v = tok.substr(e + 1);
        if (k == "name") {
          l.name = v;
        } else if (k == "inputs") {
          std::istringstream vs(v);
          std::string part;
          while (std::getline(vs, part, ',')) l.inputs.push_back(std::stoi(part));
        } else if (k == "filters") {
          l.filters = std::stoul(v);
        } else if (k == "kernel") {
          l.kernel = std::stoul(v);
        } else if (k == "stride") {
          l.stride = std::stoul(v);
        } else if (k == "out") {
          const auto hw = split_sizes(v, 'x');
          if (hw.size() != 2) throw std::invalid_argument("bad resize size '" + v + "'");
          l.out_h = hw[0];
          l.out_w = hw[1];
        } else {
          throw std::invalid_argument("unknown layer attribute '" + k + "'");
        }
      }
      spec.layers.push_back(std::move(l));
    } else {
      throw std::invalid_argument("spec line " + std::to_string(lineno) + ": unknown key '" + key +
                                  "'");
    }
  }
  validate_spec(spec);
  return spec;
}

std::string spec_fingerprint(const NetworkSpec& spec) { return to_hex(sha256(serialize_spec(spec))); }

template <typename T>
WeightBundle<T> init_weights(const NetworkSpec& spec, std::uint64_t seed) {
  WeightBundle<T> w(param_layout(spec));
  Rng rng(seed);
  for (std::size_t v = 0; v < w.layout().views().size(); ++v) {
    const ParamView& pv = w.layout().views()[v];
    auto span = w.view(v);
    if (pv.shape.size() != 4) continue;  // bias
    const double fan_in = static_cast<double>(pv.shape[1] * pv.shape[2] * pv.shape[3]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (T& e : span) e = static_cast<T>(rng.uniform(-bound, bound));
  }
  return w;
}

template <typename T>
NodeId build_forward(Tape<T>& tape, const NetworkSpec& spec, const WeightBundle<T>& weights,
                     NodeId input) {
  if (tape.value(input).shape() != spec.input_shape) {
    throw ShapeError("network input " + shape_str(tape.value(input).shape()) + ", expected " +
                     shape_str(spec.input_shape));
  }
  const ParamLayout& layout = weights.layout();
  std::vector<NodeId> out(spec.layers.size());
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    std::vector<NodeId> ins;
    for (int id : resolved_inputs(spec, i)) {
      ins.push_back(id == -1 ? input : out[static_cast<std::size_t>(id)]);
    }
    switch (l.kind) {
      case LayerKind::conv: {
        const NodeId w = tape.param(weights, layout.index_of(l.name + ".weight"));
        const NodeId b = tape.param(weights, layout.index_of(l.name + ".bias"));
        out[i] = tape.conv2d(ins[0], w, b);
        break;
      }
      case LayerKind::relu: out[i] = tape.relu(ins[0]); break;
      case LayerKind::max_pool: out[i] = tape.max_pool2(ins[0]); break;
      case LayerKind::resize: out[i] = tape.resize_nearest(ins[0], l.out_h, l.out_w); break;
      case LayerKind::concat: out[i] = tape.concat(ins); break;
    }
  }
  tape.set_output(out.back());
  return out.back();
}

template <typename T>
ForwardResult<T> forward(const NetworkSpec& spec, const WeightBundle<T>& weights,
                         const Tensor<T>& input, bool record) {
  if (weights.layout() != *param_layout(spec)) {
    throw ShapeError("weights do not match the network's parameter layout");
  }
  Tape<T> tape(weights.layout_ptr());
  const NodeId x = tape.input(input);
  const NodeId y = build_forward(tape, spec, weights, x);
  ForwardResult<T> r{tape.value(y), std::nullopt};
  if (r.output.shape() != spec.output_shape) {
    throw ShapeError("network produced " + shape_str(r.output.shape()) + ", declared " +
                     shape_str(spec.output_shape));
  }
  if (record) r.tape = std::move(tape);
  return r;
}

template WeightBundle<float> init_weights<float>(const NetworkSpec&, std::uint64_t);
template WeightBundle<double> init_weights<double>(const NetworkSpec&, std::uint64_t);
template NodeId build_forward<float>(Tape<float>&, const NetworkSpec&, const WeightBundle<float>&, NodeId);
template NodeId build_forward<double>(Tape<double>&, const NetworkSpec&, const WeightBundle<double>&,
                                      NodeId);
template ForwardResult<float> forward<float>(const NetworkSpec&, const WeightBundle<float>&,
                                             const Tensor<float>&, bool);
template ForwardResult<double> forward<double>(const NetworkSpec&, const WeightBundle<double>&,
                                               const Tensor<double>&, bool);

}  // namespace mtfas

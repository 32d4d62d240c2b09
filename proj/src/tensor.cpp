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

#include "mtfas/tensor.hpp"

#include <sstream>

#include "mtfas/weights.hpp"

namespace mtfas {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::string_view precision_name(Precision p) {
  return p == Precision::single ? "single" : "double";
}

Precision parse_precision(std::string_view name) {
  if (name == "single") return Precision::single;
  if (name == "double") return Precision::double_;
  throw std::invalid_argument("unknown precision '" + std::string(name) + "'");
}

void ParamLayout::add(std::string name, Shape shape) {
  for (const ParamView& v : views_) {
    if (v.name == name) throw std::invalid_argument("duplicate parameter view '" + name + "'");
  }
  ParamView v{std::move(name), total_, std::move(shape)};
  total_ += v.size();
  views_.push_back(std::move(v));
}

std::size_t ParamLayout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < views_.size(); ++i) {
    if (views_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter view named '" + std::string(name) + "'");
}

bool ParamLayout::tiles_exactly() const {
  std::size_t next = 0;
  for (const ParamView& v : views_) {
    if (v.offset != next) return false;
    next += v.size();
  }
  return next == total_;
}

}  // namespace mtfas

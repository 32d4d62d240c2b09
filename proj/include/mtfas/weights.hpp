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

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtfas/tensor.hpp"

namespace mtfas {

struct ParamView {
  std::string name;
  std::size_t offset = 0;
  Shape shape;

  std::size_t size() const { return shape_size(shape); }
  friend bool operator==(const ParamView&, const ParamView&) = default;
};

/// Named views that tile a flat parameter vector in declaration order.
class ParamLayout {
 public:
  ParamLayout() = default;

  /// Appends a view directly after the previous one.
  void add(std::string name, Shape shape);

  const std::vector<ParamView>& views() const { return views_; }
  std::size_t total_size() const { return total_; }
  std::size_t index_of(std::string_view name) const;  // throws if absent
  const ParamView& view(std::string_view name) const { return views_[index_of(name)]; }

  /// Checks that views tile [0, total) with no overlap and no gap.
  bool tiles_exactly() const;

  friend bool operator==(const ParamLayout& a, const ParamLayout& b) {
    return a.views_ == b.views_ && a.total_ == b.total_;
  }

 private:
  std::vector<ParamView> views_;
  std::size_t total_ = 0;
};

template <typename T>
class WeightBundle {
 public:
  WeightBundle() = default;

  explicit WeightBundle(std::shared_ptr<const ParamLayout> layout)
      : layout_(std::move(layout)), flat_(Shape{std::max<std::size_t>(layout_->total_size(), 1)}) {}

  WeightBundle(std::shared_ptr<const ParamLayout> layout, Tensor<T> flat)
      : layout_(std::move(layout)), flat_(std::move(flat)) {
    if (flat_.rank() != 1 || flat_.size() != std::max<std::size_t>(layout_->total_size(), 1)) {
      throw ShapeError("flat tensor of shape " + shape_str(flat_.shape()) +
                       " does not match layout of " + std::to_string(layout_->total_size()) +
                       " parameters");
    }
  }

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const { return layout_; }

  const Tensor<T>& flat() const { return flat_; }
  Tensor<T>& flat() { return flat_; }
  std::size_t size() const { return layout_ ? layout_->total_size() : 0; }

  std::span<const T> view(std::size_t index) const {
    const ParamView& v = layout_->views()[index];
    return flat_.data().subspan(v.offset, v.size());
  }
  std::span<T> view(std::size_t index) {
    const ParamView& v = layout_->views()[index];
    return flat_.data().subspan(v.offset, v.size());
  }
  std::span<const T> view(std::string_view name) const { return view(layout_->index_of(name)); }
  std::span<T> view(std::string_view name) { return view(layout_->index_of(name)); }

  bool same_layout(const WeightBundle& other) const {
    return layout_ && other.layout_ && (layout_ == other.layout_ || *layout_ == *other.layout_);
  }

  /// Throws ShapeError unless both bundles share a layout.
  void require_same_layout(const WeightBundle& other, std::string_view what) const;

  template <typename U>
  WeightBundle<U> cast() const {
    return WeightBundle<U>(layout_, flat_.template cast<U>());
  }

  friend bool operator==(const WeightBundle& a, const WeightBundle& b) {
    return a.same_layout(b) && a.flat_ == b.flat_;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Tensor<T> flat_;
};

template <typename T>
void WeightBundle<T>::require_same_layout(const WeightBundle& other, std::string_view what) const {
  if (!same_layout(other)) throw ShapeError("layout mismatch in " + std::string(what));
}

}  // namespace mtfas

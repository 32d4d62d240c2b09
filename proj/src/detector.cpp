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

#include <numeric>

#include "mtfas/meta_trainer.hpp"
#include "parallel.hpp"

namespace mtfas {

using detail::for_each_index;
using detail::map_mse;
using detail::ordered_sum;

namespace {
constexpr std::uint64_t kShuffleStream = 5;
constexpr std::uint64_t kInitStream = 6;
}  // namespace

std::string_view source_name(SupervisionSource source) {
  switch (source) {
    case SupervisionSource::meta_teacher: return "meta_teacher";
    case SupervisionSource::pixel_binary: return "pixel_binary";
    case SupervisionSource::baseline_teacher: return "baseline_teacher";
  }
  return "pixel_binary";
}

SupervisionSource parse_source(std::string_view name) {
  for (auto s : {SupervisionSource::meta_teacher, SupervisionSource::pixel_binary,
                 SupervisionSource::baseline_teacher}) {
    if (source_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown supervision source '" + std::string(name) + "'");
}

template <typename T>
std::vector<Tensor<T>> supervision_targets(const NetworkSpec& detector_spec,
                                           SupervisionSource source,
                                           std::span<const Sample* const> samples,
                                           const TeacherRef<T>& teacher) {
  if (source != SupervisionSource::pixel_binary) {
    if (!teacher.spec || !teacher.weights) {
      throw std::invalid_argument("supervision source " + std::string(source_name(source)) +
                                  " needs teacher weights");
    }
    if (teacher.spec->output_shape != detector_spec.output_shape) {
      throw ShapeError("teacher map " + shape_str(teacher.spec->output_shape) +
                       " does not match detector map " + shape_str(detector_spec.output_shape));
    }
  }
  std::vector<Tensor<T>> out(samples.size());
  for_each_index(samples.size(), [&](std::size_t i) {
    const Sample& s = *samples[i];
    switch (source) {
      case SupervisionSource::pixel_binary:
        out[i] = binary_supervision<T>(detector_spec, s).values;
        break;
      case SupervisionSource::meta_teacher:
        out[i] = normalized_supervision(*teacher.weights, *teacher.spec, s).values;
        break;
      case SupervisionSource::baseline_teacher:
        out[i] = baseline_teacher_output(*teacher.weights, *teacher.spec, s).values;
        break;
    }
  });
  return out;
}

namespace {

template <typename T>
double dataset_loss(const NetworkSpec& spec, const WeightBundle<T>& w,
                    const std::vector<const Sample*>& samples, const std::vector<Tensor<T>>& targets) {
  std::vector<double> per(samples.size());
  for_each_index(samples.size(), [&](std::size_t i) {
    per[i] = map_mse(forward(spec, w, network_input<T>(spec, *samples[i]), false).output, targets[i]);
  });
  double acc = 0.0;
  for (double v : per) acc += v;
  return acc / static_cast<double>(per.size());
}

}  // namespace

template <typename T>
DetectorTrainResult<T> train_detector(const NetworkSpec& detector_spec, SupervisionSource source,
                                      const Dataset& dataset,
                                      std::span<const std::uint64_t> train_ids,
                                      const DetectorTrainConfig& cfg,
                                      const TeacherRef<T>& teacher) {
  if (train_ids.empty()) throw std::invalid_argument("train_detector: no training samples");
  if (cfg.batch_size < 1) throw ConfigError("batch_size", "batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr", "lr must be > 0");

  std::vector<const Sample*> samples;
  samples.reserve(train_ids.size());
  for (std::uint64_t id : train_ids) samples.push_back(&dataset.by_id(id));
  const std::vector<Tensor<T>> targets = supervision_targets(detector_spec, source, samples, teacher);

  DetectorTrainResult<T> r;
  r.weights = init_weights<T>(detector_spec, mix_seed(cfg.seed, kInitStream));
  r.initial_loss = dataset_loss(detector_spec, r.weights, samples, targets);

  Rng rng(mix_seed(cfg.seed, kShuffleStream));
  Adam<T> opt(r.weights.size(), cfg.lr);
  const double pixels = static_cast<double>(shape_size(detector_spec.output_shape));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, order.size() - start);
      const T scale = static_cast<T>(2.0 / (static_cast<double>(B) * pixels));
      std::vector<Tensor<T>> grads(B);
      std::vector<double> losses(B);
      for_each_index(B, [&](std::size_t i) {
        const std::size_t k = order[start + i];
        Tape<T> tape = std::move(
            *forward(detector_spec, r.weights, network_input<T>(detector_spec, *samples[k]), true).tape);
        const Tensor<T>& f = tape.value(tape.output());
        losses[i] = map_mse(f, targets[k]);
        Tensor<T> c(f.shape());
        for (std::size_t p = 0; p < c.size(); ++p) c[p] = scale * (f[p] - targets[k][p]);
        grads[i] = vjp(tape, r.weights, c);
      });
      for (double v : losses) epoch_loss += v;
      const Tensor<T> g = ordered_sum(grads, r.weights.flat().shape());
      g.check_finite("detector gradient");
      opt.step(r.weights, g);
    }
    r.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  r.final_loss = dataset_loss(detector_spec, r.weights, samples, targets);
  return r;
}

template <typename T>
std::vector<double> detector_scores(const NetworkSpec& spec, const WeightBundle<T>& weights,
                                    std::span<const Sample* const> samples) {
  std::vector<double> out(samples.size());
  for_each_index(samples.size(), [&](std::size_t i) {
    const Tensor<T> f = forward(spec, weights, network_input<T>(spec, *samples[i]), false).output;
    double acc = 0.0;
    for (T v : f.data()) acc += static_cast<double>(v);
    out[i] = acc / static_cast<double>(f.size());
  });
  return out;
}

#define MTFAS_INSTANTIATE(T)                                                                     \
  template std::vector<Tensor<T>> supervision_targets<T>(                                       \
      const NetworkSpec&, SupervisionSource, std::span<const Sample* const>, const TeacherRef<T>&); \
  template DetectorTrainResult<T> train_detector<T>(const NetworkSpec&, SupervisionSource,      \
                                                    const Dataset&,                             \
                                                    std::span<const std::uint64_t>,             \
                                                    const DetectorTrainConfig&,                 \
                                                    const TeacherRef<T>&);                      \
  template std::vector<double> detector_scores<T>(const NetworkSpec&, const WeightBundle<T>&,   \
                                                  std::span<const Sample* const>);

MTFAS_INSTANTIATE(float)
MTFAS_INSTANTIATE(double)
#undef MTFAS_INSTANTIATE

}  // namespace mtfas

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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtfas/network.hpp"
#include "mtfas/rng.hpp"
#include "mtfas/synth_data.hpp"
#include "mtfas/teacher.hpp"

namespace mtfas {

/// A configuration value that violates its constraint. `key` names the field.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Inputs to meta_gradient that were not produced together.
class ProvenanceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Ablations {
  bool no_pretrain = false;
  bool no_mt_v = false;
  bool no_detector_sync = false;

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct TrainConfig {
  double alpha = 0.001;  // lower-level step size
  double beta = 0.001;   // meta step size
  double gamma = 0.999;  // MT_v momentum
  double mu = 0.001;     // anti-collapse weight
  std::size_t T = 10;    // detector sync interval
  std::size_t M = 20;    // per-class size of the training batch
  std::size_t N = 10;    // per-class size of the validation batch
  std::size_t lower_steps = 2;
  std::size_t pretrain_iters = 20000;
  std::size_t meta_iters = 10000;
  double pretrain_lr = 0.001;
  std::uint64_t seed = 0;
  Ablations ablations;

  /// Throws ConfigError naming the first offending field.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// The surrogate detector (student) and the teacher may use different widths.
struct MetaModels {
  NetworkSpec detector;
  NetworkSpec teacher;
};

struct Batch {
  std::vector<const Sample*> samples;

  std::vector<std::uint64_t> ids() const;
  std::size_t spoof_count() const;
  std::size_t size() const { return samples.size(); }
};

struct BatchPair {
  Batch phi_t;  // M live then M spoof
  Batch phi_v;  // N live then N spoof
};

/// Draws disjoint training and validation batches without replacement.
BatchPair sample_batches(const Dataset& dataset, std::size_t M, std::size_t N, Rng& rng);

template <typename T>
class Adam {
 public:
  Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(WeightBundle<T>& weights, const Tensor<T>& grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Mean over samples of the per-map mean squared error.
template <typename T>
double batch_mse(std::span<const Tensor<T>> outputs, std::span<const Tensor<T>> targets);

/// L_t(theta; omega) with the teacher's constrained maps as targets.
template <typename T>
double train_loss(const MetaModels& models, const WeightBundle<T>& theta,
                  const WeightBundle<T>& omega, const Batch& phi_t);

template <typename T>
struct LowerLevelResult {
  WeightBundle<T> theta_star;
  WeightBundle<T> theta_last;  // input of the final (differentiated) step
  std::vector<Tape<T>> student_tapes;                // final step, one per sample
  std::vector<std::optional<Tape<T>>> teacher_tapes;  // spoof samples only
  std::vector<Tensor<T>> targets;
  double initial_loss = 0.0;  // L_t at the incoming theta
  double final_loss = 0.0;    // L_t at theta_last
  std::vector<std::uint64_t> batch_ids;
  double alpha = 0.0;
  WeightBundle<T> omega;  // teacher weights the targets came from
};

/// `steps` plain gradient steps on the same batch. Only the final step is
/// differentiated with respect to omega; theta_last is a constant there.
template <typename T>
LowerLevelResult<T> lower_level_step(const MetaModels& models, const WeightBundle<T>& theta,
                                     const WeightBundle<T>& omega, const Batch& phi_t,
                                     double alpha, std::size_t steps);

template <typename T>
struct ValidationResult {
  double loss = 0.0;
  Tensor<T> grad_theta;  // dL_v/dtheta_star; rank 0 when not requested
};

template <typename T>
ValidationResult<T> validation_loss(const MetaModels& models, const WeightBundle<T>& theta_star,
                                    const WeightBundle<T>& omega_hat, const Batch& phi_v,
                                    bool with_grad = true);

template <typename T>
struct MetaGradient {
  Tensor<T> grad;             // d/domega of L_v - mu * mean_sigmoid
  double mean_sigmoid = 0.0;  // over the spoof samples of phi_t
};

/// Structural meta-gradient: v = dL_v/dtheta_star, u_k = J_f(theta_last) v per
/// spoof sample, then one teacher vjp per spoof carrying both the validation
/// term and the mu term. Live samples contribute nothing.
template <typename T>
MetaGradient<T> meta_gradient(const MetaModels& models, const LowerLevelResult<T>& lower,
                              const WeightBundle<T>& omega,
                              const ValidationResult<T>& validation, const Batch& phi_t,
                              double alpha, double mu);

/// Convenience form: one differentiated step from theta_last, then the above.
template <typename T>
MetaGradient<T> meta_gradient(const MetaModels& models, const WeightBundle<T>& theta_last,
                              const WeightBundle<T>& omega, const WeightBundle<T>& omega_hat,
                              const Batch& phi_t, const Batch& phi_v, double alpha, double mu);

/// The scalar that meta_gradient differentiates, recomputed from scratch:
/// L_v(theta_last - alpha * dL_t/dtheta; omega_hat) - mu * mean_sigmoid(omega).
template <typename T>
double meta_objective(const MetaModels& models, const WeightBundle<T>& theta_last,
                      const WeightBundle<T>& omega, const WeightBundle<T>& omega_hat,
                      const Batch& phi_t, const Batch& phi_v, double alpha, double mu);

/// omega_hat <- gamma * omega_hat + (1 - gamma) * omega.
template <typename T>
void momentum_update(WeightBundle<T>& omega_hat, const WeightBundle<T>& omega, double gamma);

struct PretrainReport {
  std::size_t iterations = 0;
  double detector_mse = 0.0;  // on a fresh batch after the last update
  double teacher_mse = 0.0;   // spoof samples of the same batch vs one maps
  bool skipped = false;
};

/// Adam regression of the detector toward zero/one maps and of MT_t toward
/// one maps on spoofs, M live + M spoof per step. Ends with omega_hat = omega.
template <typename T>
PretrainReport pretrain(const MetaModels& models, WeightBundle<T>& theta, TeacherState<T>& state,
                        const Dataset& dataset, const TrainConfig& cfg);

/// Detector/teacher weights before pretraining, derived from cfg.seed.
template <typename T>
struct MetaState {
  WeightBundle<T> theta;
  TeacherState<T> teacher;
};

template <typename T>
MetaState<T> initial_state(const MetaModels& models, std::uint64_t seed);

struct MetaIterationTrace {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double meta_grad_norm = 0.0;
  double mean_sigmoid = 0.0;
  bool detector_synced = false;
  std::vector<std::uint64_t> phi_t_ids;
  std::vector<std::uint64_t> phi_v_ids;
};

using MetaObserver = std::function<void(const MetaIterationTrace&)>;

template <typename T>
struct MetaTrainResult {
  MetaState<T> state;
  std::vector<MetaIterationTrace> trace;
  std::optional<PretrainReport> pretrain;
  std::optional<std::string> aborted;  // set when a non-finite value stopped the run
};

/// The meta iterations alone, starting from `start`.
template <typename T>
MetaTrainResult<T> run_meta_iterations(const MetaModels& models, const Dataset& dataset,
                                       const TrainConfig& cfg, MetaState<T> start,
                                       const MetaObserver& observer = {});

/// initial_state, pretrain, then run_meta_iterations.
template <typename T>
MetaTrainResult<T> train_meta_teacher(const MetaModels& models, const Dataset& dataset,
                                      const TrainConfig& cfg, const MetaObserver& observer = {});

void write_trace_header(std::ostream& os);
void write_trace_row(std::ostream& os, const MetaIterationTrace& row);

enum class SupervisionSource { meta_teacher, pixel_binary, baseline_teacher };

std::string_view source_name(SupervisionSource source);
SupervisionSource parse_source(std::string_view name);

struct DetectorTrainConfig {
  std::size_t epochs = 10;
  double lr = 0.001;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

/// Teacher network used by the meta_teacher and baseline_teacher sources.
template <typename T>
struct TeacherRef {
  const NetworkSpec* spec = nullptr;
  const WeightBundle<T>* weights = nullptr;
};

/// Per-sample targets for a supervision source.
template <typename T>
std::vector<Tensor<T>> supervision_targets(const NetworkSpec& detector_spec,
                                           SupervisionSource source,
                                           std::span<const Sample* const> samples,
                                           const TeacherRef<T>& teacher);

template <typename T>
struct DetectorTrainResult {
  WeightBundle<T> weights;
  double initial_loss = 0.0;  // full training set, before the first step
  double final_loss = 0.0;    // full training set, after the last step
  std::vector<double> epoch_losses;
};

template <typename T>
DetectorTrainResult<T> train_detector(const NetworkSpec& detector_spec, SupervisionSource source,
                                      const Dataset& dataset,
                                      std::span<const std::uint64_t> train_ids,
                                      const DetectorTrainConfig& cfg,
                                      const TeacherRef<T>& teacher = {});

/// Mean of the detector's output map per sample.
template <typename T>
std::vector<double> detector_scores(const NetworkSpec& spec, const WeightBundle<T>& weights,
                                    std::span<const Sample* const> samples);

}  // namespace mtfas

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

#include "mtfas/meta_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "parallel.hpp"

namespace mtfas {

using detail::for_each_index;
using detail::map_mse;
using detail::ordered_sum;

namespace {

// Independent PRNG streams derived from the run seed.
constexpr std::uint64_t kDetectorInitStream = 1;
constexpr std::uint64_t kTeacherInitStream = 2;
constexpr std::uint64_t kPretrainStream = 3;
constexpr std::uint64_t kMetaStream = 4;

template <typename T>
Tape<T> student_tape(const NetworkSpec& spec, const WeightBundle<T>& w, const Sample& s) {
  return std::move(*forward(spec, w, network_input<T>(spec, s), true).tape);
}

template <typename T>
const Tensor<T>& tape_output(const Tape<T>& tape) {
  return tape.value(tape.output());
}

template <typename T>
Tensor<T> residual_cotangent(const Tensor<T>& out, const Tensor<T>& target, T scale) {
  Tensor<T> c(out.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = scale * (out[i] - target[i]);
  return c;
}

template <typename T>
void descend(WeightBundle<T>& w, const Tensor<T>& g, double lr) {
  const T a = static_cast<T>(lr);
  auto flat = w.flat().data();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= a * g[i];
}

double ordered_mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError("non-finite " + what);
}

void require_matching_maps(const MetaModels& models) {
  if (models.detector.output_shape != models.teacher.output_shape) {
    throw ShapeError("detector map " + shape_str(models.detector.output_shape) +
                     " and teacher map " + shape_str(models.teacher.output_shape) + " differ");
  }
}

double norm2(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x * x;
  return std::sqrt(acc);
}

/// Detector gradient of the batch MSE toward fixed targets.
template <typename T>
Tensor<T> regression_grad(const NetworkSpec& spec, const WeightBundle<T>& w,
                          std::span<const Sample* const> samples,
                          std::span<const Tensor<T>> targets, double* loss) {
  const std::size_t B = samples.size();
  const T scale = static_cast<T>(2.0 / (static_cast<double>(B) * shape_size(spec.output_shape)));
  std::vector<Tensor<T>> grads(B);
  std::vector<double> losses(B);
  for_each_index(B, [&](std::size_t i) {
    Tape<T> tape = student_tape(spec, w, *samples[i]);
    losses[i] = map_mse(tape_output(tape), targets[i]);
    grads[i] = vjp(tape, w, residual_cotangent(tape_output(tape), targets[i], scale));
  });
  *loss = ordered_mean(losses);
  return ordered_sum(grads, w.flat().shape());
}

std::vector<const Sample*> draw(const std::vector<const Sample*>& pool, std::size_t n, Rng& rng) {
  std::vector<const Sample*> v = pool;
  rng.shuffle(v);
  v.resize(std::min(n, v.size()));
  return v;
}

void split_classes(const Dataset& dataset, std::vector<const Sample*>& live,
                   std::vector<const Sample*>& spoof) {
  for (const Sample& s : dataset.samples) (s.is_spoof() ? spoof : live).push_back(&s);
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const char* key, const std::string& msg) { throw ConfigError(key, msg); };
  if (!(alpha > 0.0) || !std::isfinite(alpha)) fail("alpha", "alpha must be > 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta", "beta must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "gamma must lie in [0, 1]");
  if (!(mu >= 0.0) || !std::isfinite(mu)) fail("mu", "mu must be >= 0");
  if (T < 1) fail("T", "T must be >= 1");
  if (M < 1) fail("M", "M must be >= 1");
  if (N < 1) fail("N", "N must be >= 1");
  if (lower_steps < 1) fail("lower_steps", "lower_steps must be >= 1");
  if (!(pretrain_lr > 0.0) || !std::isfinite(pretrain_lr)) fail("pretrain_lr", "pretrain_lr must be > 0");
}

std::vector<std::uint64_t> Batch::ids() const {
  std::vector<std::uint64_t> out;
  out.reserve(samples.size());
  for (const Sample* s : samples) out.push_back(s->id);
  return out;
}

std::size_t Batch::spoof_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const Sample* s) { return s->is_spoof(); }));
}

BatchPair sample_batches(const Dataset& dataset, std::size_t M, std::size_t N, Rng& rng) {
  std::vector<const Sample*> live, spoof;
  split_classes(dataset, live, spoof);
  if (live.size() < M + N || spoof.size() < M + N) {
    throw std::invalid_argument("sample_batches: need " + std::to_string(M + N) +
                                " samples per class, have " + std::to_string(live.size()) +
                                " live and " + std::to_string(spoof.size()) + " spoof");
  }
  rng.shuffle(live);
  rng.shuffle(spoof);
  BatchPair b;
  b.phi_t.samples.insert(b.phi_t.samples.end(), live.begin(), live.begin() + M);
  b.phi_t.samples.insert(b.phi_t.samples.end(), spoof.begin(), spoof.begin() + M);
  b.phi_v.samples.insert(b.phi_v.samples.end(), live.begin() + M, live.begin() + M + N);
  b.phi_v.samples.insert(b.phi_v.samples.end(), spoof.begin() + M, spoof.begin() + M + N);
  return b;
}

template <typename T>
Adam<T>::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

template <typename T>
void Adam<T>::step(WeightBundle<T>& weights, const Tensor<T>& grad) {
  auto flat = weights.flat().data();
  if (grad.size() != flat.size() || m_.size() > flat.size()) {
    throw ShapeError("Adam: gradient does not match the parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    flat[i] = static_cast<T>(static_cast<double>(flat[i]) - lr_ * mh / (std::sqrt(vh) + eps_));
  }
}

template <typename T>
double batch_mse(std::span<const Tensor<T>> outputs, std::span<const Tensor<T>> targets) {
  if (outputs.size() != targets.size()) throw ShapeError("batch_mse: size mismatch");
  std::vector<double> per(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) per[i] = map_mse(outputs[i], targets[i]);
  return ordered_mean(per);
}

template <typename T>
double train_loss(const MetaModels& models, const WeightBundle<T>& theta,
                  const WeightBundle<T>& omega, const Batch& phi_t) {
  const std::size_t B = phi_t.size();
  std::vector<double> per(B);
  for_each_index(B, [&](std::size_t i) {
    const Sample& s = *phi_t.samples[i];
    const Tensor<T> f = forward(models.detector, theta, network_input<T>(models.detector, s), false).output;
    per[i] = map_mse(f, teacher_pass(models.teacher, omega, s, false).map);
  });
  return ordered_mean(per);
}

template <typename T>
LowerLevelResult<T> lower_level_step(const MetaModels& models, const WeightBundle<T>& theta,
                                     const WeightBundle<T>& omega, const Batch& phi_t,
                                     double alpha, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("lower_level_step: steps must be >= 1");
  if (phi_t.size() == 0) throw std::invalid_argument("lower_level_step: empty batch");
  require_matching_maps(models);

  const std::size_t B = phi_t.size();
  LowerLevelResult<T> r;
  r.batch_ids = phi_t.ids();
  r.alpha = alpha;
  r.omega = omega;
  r.targets.resize(B);
  r.teacher_tapes.resize(B);
  for_each_index(B, [&](std::size_t i) {
    TeacherPass<T> p = teacher_pass(models.teacher, omega, *phi_t.samples[i], true);
    r.targets[i] = std::move(p.map);
    r.teacher_tapes[i] = std::move(p.tape);
  });

  const T scale =
      static_cast<T>(2.0 / (static_cast<double>(B) * shape_size(models.detector.output_shape)));
  WeightBundle<T> cur = theta;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<Tape<T>> tapes(B);
    std::vector<Tensor<T>> grads(B);
    std::vector<double> losses(B);
    for_each_index(B, [&](std::size_t i) {
      tapes[i] = student_tape(models.detector, cur, *phi_t.samples[i]);
      const Tensor<T>& f = tape_output(tapes[i]);
      losses[i] = map_mse(f, r.targets[i]);
      grads[i] = vjp(tapes[i], cur, residual_cotangent(f, r.targets[i], scale));
    });
    const double loss = ordered_mean(losses);
    require_finite(loss, "training loss");
    if (step == 0) r.initial_loss = loss;
    const Tensor<T> g = ordered_sum(grads, cur.flat().shape());
    g.check_finite("lower-level gradient");
    if (step + 1 == steps) {
      r.final_loss = loss;
      r.theta_last = cur;
      r.student_tapes = std::move(tapes);
    }
    descend(cur, g, alpha);
  }
  r.theta_star = std::move(cur);
  return r;
}

template <typename T>
ValidationResult<T> validation_loss(const MetaModels& models, const WeightBundle<T>& theta_star,
                                    const WeightBundle<T>& omega_hat, const Batch& phi_v,
                                    bool with_grad) {
  require_matching_maps(models);
  const std::size_t B = phi_v.size();
  ValidationResult<T> r;
  if (with_grad) r.grad_theta = Tensor<T>(theta_star.flat().shape());
  if (B == 0) return r;

  const T scale =
      static_cast<T>(2.0 / (static_cast<double>(B) * shape_size(models.detector.output_shape)));
  std::vector<Tensor<T>> grads(B);
  std::vector<double> losses(B);
  for_each_index(B, [&](std::size_t i) {
    const Sample& s = *phi_v.samples[i];
    const Tensor<T> target = teacher_pass(models.teacher, omega_hat, s, false).map;
    if (with_grad) {
      Tape<T> tape = student_tape(models.detector, theta_star, s);
      losses[i] = map_mse(tape_output(tape), target);
      grads[i] = vjp(tape, theta_star, residual_cotangent(tape_output(tape), target, scale));
    } else {
      const Tensor<T> f =
          forward(models.detector, theta_star, network_input<T>(models.detector, s), false).output;
      losses[i] = map_mse(f, target);
    }
  });
  r.loss = ordered_mean(losses);
  require_finite(r.loss, "validation loss");
  if (with_grad) {
    r.grad_theta = ordered_sum(grads, theta_star.flat().shape());
    r.grad_theta.check_finite("validation gradient");
  }
  return r;
}

template <typename T>
MetaGradient<T> meta_gradient(const MetaModels& models, const LowerLevelResult<T>& lower,
                              const WeightBundle<T>& omega,
                              const ValidationResult<T>& validation, const Batch& phi_t,
                              double alpha, double mu) {
  if (lower.batch_ids != phi_t.ids()) {
    throw ProvenanceError("meta_gradient: lower-level result was computed on a different batch");
  }
  if (lower.alpha != alpha) {
    throw ProvenanceError("meta_gradient: lower-level result used alpha " +
                          std::to_string(lower.alpha) + ", not " + std::to_string(alpha));
  }
  if (!(lower.omega == omega)) {
    throw ProvenanceError("meta_gradient: lower-level targets came from different teacher weights");
  }
  if (validation.grad_theta.rank() != 1 || validation.grad_theta.shape() != lower.theta_last.flat().shape()) {
    throw ProvenanceError("meta_gradient: validation gradient missing or for a different detector");
  }

  const std::size_t B = phi_t.size();
  const std::size_t n_spoof = phi_t.spoof_count();
  const double pixels = static_cast<double>(shape_size(models.teacher.output_shape));
  const T scale_v = static_cast<T>(2.0 * alpha / (static_cast<double>(B) * pixels));
  const T scale_mu =
      n_spoof ? static_cast<T>(mu / (2.0 * static_cast<double>(n_spoof) * pixels)) : T(0);

  std::vector<Tensor<T>> grads(B);
  std::vector<double> sig(B, 0.0);
  for_each_index(B, [&](std::size_t i) {
    if (!phi_t.samples[i]->is_spoof()) return;
    const Tensor<T> u = jvp(lower.student_tapes[i], lower.theta_last, validation.grad_theta);
    Tensor<T> c(u.shape());
    for (std::size_t p = 0; p < c.size(); ++p) c[p] = scale_v * u[p] - scale_mu;
    grads[i] = vjp(*lower.teacher_tapes[i], omega, c);
    double acc = 0.0;
    for (T v : lower.targets[i].data()) acc += static_cast<double>(v);
    sig[i] = acc / (2.0 * pixels);
  });

  MetaGradient<T> r;
  r.grad = ordered_sum(grads, omega.flat().shape());
  r.grad.check_finite("meta-gradient");
  double acc = 0.0;
  for (double s : sig) acc += s;
  r.mean_sigmoid = n_spoof ? acc / static_cast<double>(n_spoof) : 0.0;
  return r;
}

template <typename T>
MetaGradient<T> meta_gradient(const MetaModels& models, const WeightBundle<T>& theta_last,
                              const WeightBundle<T>& omega, const WeightBundle<T>& omega_hat,
                              const Batch& phi_t, const Batch& phi_v, double alpha, double mu) {
  const LowerLevelResult<T> lower = lower_level_step(models, theta_last, omega, phi_t, alpha, 1);
  const ValidationResult<T> val = validation_loss(models, lower.theta_star, omega_hat, phi_v, true);
  return meta_gradient(models, lower, omega, val, phi_t, alpha, mu);
}

template <typename T>
double meta_objective(const MetaModels& models, const WeightBundle<T>& theta_last,
                      const WeightBundle<T>& omega, const WeightBundle<T>& omega_hat,
                      const Batch& phi_t, const Batch& phi_v, double alpha, double mu) {
  require_matching_maps(models);
  const std::size_t B = phi_t.size();
  std::vector<Tensor<T>> targets(B);
  for_each_index(B, [&](std::size_t i) {
    targets[i] = teacher_pass(models.teacher, omega, *phi_t.samples[i], false).map;
  });
  double unused = 0.0;
  const Tensor<T> g = regression_grad<T>(models.detector, theta_last, phi_t.samples, targets, &unused);
  WeightBundle<T> theta_star = theta_last;
  descend(theta_star, g, alpha);
  const double lv = validation_loss(models, theta_star, omega_hat, phi_v, false).loss;

  double sig = 0.0;
  std::size_t n_spoof = 0;
  for (std::size_t i = 0; i < B; ++i) {
    if (!phi_t.samples[i]->is_spoof()) continue;
    double acc = 0.0;
    for (T v : targets[i].data()) acc += static_cast<double>(v);
    sig += acc / (2.0 * static_cast<double>(targets[i].size()));
    ++n_spoof;
  }
  const double mean_sig = n_spoof ? sig / static_cast<double>(n_spoof) : 0.0;
  return lv - mu * mean_sig;
}

template <typename T>
void momentum_update(WeightBundle<T>& omega_hat, const WeightBundle<T>& omega, double gamma) {
  omega_hat.require_same_layout(omega, "momentum_update");
  auto h = omega_hat.flat().data();
  auto w = omega.flat().data();
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = static_cast<T>(gamma * static_cast<double>(h[i]) + (1.0 - gamma) * static_cast<double>(w[i]));
  }
}

template <typename T>
MetaState<T> initial_state(const MetaModels& models, std::uint64_t seed) {
  MetaState<T> s;
  s.theta = init_weights<T>(models.detector, mix_seed(seed, kDetectorInitStream));
  s.teacher = TeacherState<T>::initial(models.teacher, mix_seed(seed, kTeacherInitStream));
  return s;
}

template <typename T>
PretrainReport pretrain(const MetaModels& models, WeightBundle<T>& theta, TeacherState<T>& state,
                        const Dataset& dataset, const TrainConfig& cfg) {
  PretrainReport report;
  if (cfg.ablations.no_pretrain) {
    state.omega_hat = state.omega;
    report.skipped = true;
    return report;
  }
  std::vector<const Sample*> live, spoof;
  split_classes(dataset, live, spoof);
  if (live.empty() || spoof.empty()) {
    throw std::invalid_argument("pretrain: dataset must contain both live and spoof samples");
  }
  require_matching_maps(models);

  Rng rng(mix_seed(cfg.seed, kPretrainStream));
  Adam<T> det_opt(theta.size(), cfg.pretrain_lr);
  Adam<T> tea_opt(state.omega.size(), cfg.pretrain_lr);
  const Shape& map_shape = models.detector.output_shape;
  const double pixels = static_cast<double>(shape_size(map_shape));

  auto draw_batch = [&]() {
    std::vector<const Sample*> b = draw(live, cfg.M, rng);
    const std::vector<const Sample*> s = draw(spoof, cfg.M, rng);
    b.insert(b.end(), s.begin(), s.end());
    return b;
  };
  auto binary_targets = [&](const std::vector<const Sample*>& b) {
    std::vector<Tensor<T>> t;
    for (const Sample* s : b) t.push_back(binary_supervision<T>(models.detector, *s).values);
    return t;
  };

  for (std::size_t it = 0; it < cfg.pretrain_iters; ++it) {
    const std::vector<const Sample*> batch = draw_batch();
    const std::vector<Tensor<T>> targets = binary_targets(batch);
    double det_loss = 0.0;
    const Tensor<T> gd = regression_grad<T>(models.detector, theta, batch, targets, &det_loss);
    require_finite(det_loss, "pretraining loss");

    // Live teacher maps are the constant zero map, so only spoofs carry gradient.
    std::vector<const Sample*> spoofs;
    for (const Sample* s : batch) {
      if (s->is_spoof()) spoofs.push_back(s);
    }
    const T scale = static_cast<T>(2.0 / (static_cast<double>(spoofs.size()) * pixels));
    std::vector<Tensor<T>> grads(spoofs.size());
    for_each_index(spoofs.size(), [&](std::size_t i) {
      TeacherPass<T> p = teacher_pass(models.teacher, state.omega, *spoofs[i], true);
      grads[i] = vjp(*p.tape, state.omega, residual_cotangent(p.map, Tensor<T>(map_shape, T(1)), scale));
    });
    const Tensor<T> gt = ordered_sum(grads, state.omega.flat().shape());
    gt.check_finite("teacher pretraining gradient");

    det_opt.step(theta, gd);
    tea_opt.step(state.omega, gt);
  }

  const std::vector<const Sample*> batch = draw_batch();
  const std::vector<Tensor<T>> targets = binary_targets(batch);
  std::vector<double> det(batch.size()), tea;
  std::vector<Tensor<T>> tea_maps(batch.size());
  for_each_index(batch.size(), [&](std::size_t i) {
    const Tensor<T> f = forward(models.detector, theta, network_input<T>(models.detector, *batch[i]), false).output;
    det[i] = map_mse(f, targets[i]);
    tea_maps[i] = teacher_pass(models.teacher, state.omega, *batch[i], false).map;
  });
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->is_spoof()) tea.push_back(map_mse(tea_maps[i], targets[i]));
  }
  report.iterations = cfg.pretrain_iters;
  report.detector_mse = ordered_mean(det);
  report.teacher_mse = ordered_mean(tea);
  state.omega_hat = state.omega;
  return report;
}

template <typename T>
MetaTrainResult<T> run_meta_iterations(const MetaModels& models, const Dataset& dataset,
                                       const TrainConfig& cfg, MetaState<T> start,
                                       const MetaObserver& observer) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, kMetaStream));
  MetaTrainResult<T> r;
  r.state = std::move(start);
  WeightBundle<T>& theta = r.state.theta;
  TeacherState<T>& teacher = r.state.teacher;

  for (std::size_t it = 0; it < cfg.meta_iters; ++it) {
    try {
      if (cfg.ablations.no_mt_v) teacher.omega_hat = teacher.omega;
      const BatchPair b = sample_batches(dataset, cfg.M, cfg.N, rng);
      const LowerLevelResult<T> lower =
          lower_level_step(models, theta, teacher.omega, b.phi_t, cfg.alpha, cfg.lower_steps);
      const ValidationResult<T> val =
          validation_loss(models, lower.theta_star, teacher.omega_hat, b.phi_v, true);
      const MetaGradient<T> mg =
          meta_gradient(models, lower, teacher.omega, val, b.phi_t, cfg.alpha, cfg.mu);

      descend(teacher.omega, mg.grad, cfg.beta);
      teacher.omega.flat().check_finite("teacher weights");
      if (!cfg.ablations.no_mt_v) momentum_update(teacher.omega_hat, teacher.omega, cfg.gamma);

      MetaIterationTrace row;
      row.iteration = it;
      row.train_loss = lower.initial_loss;
      row.val_loss = val.loss;
      std::vector<double> g(mg.grad.data().begin(), mg.grad.data().end());
      row.meta_grad_norm = norm2(g);
      row.mean_sigmoid = mg.mean_sigmoid;
      row.detector_synced = !cfg.ablations.no_detector_sync && it % cfg.T == 0;
      row.phi_t_ids = b.phi_t.ids();
      row.phi_v_ids = b.phi_v.ids();
      if (row.detector_synced) theta = lower.theta_star;
      if (observer) observer(row);
      r.trace.push_back(std::move(row));
    } catch (const NumericalError& e) {
      r.aborted = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
  }
  return r;
}

template <typename T>
MetaTrainResult<T> train_meta_teacher(const MetaModels& models, const Dataset& dataset,
                                      const TrainConfig& cfg, const MetaObserver& observer) {
  cfg.validate();
  MetaState<T> s = initial_state<T>(models, cfg.seed);
  std::optional<PretrainReport> report;
  try {
    report = pretrain(models, s.theta, s.teacher, dataset, cfg);
  } catch (const NumericalError& e) {
    MetaTrainResult<T> r;
    r.state = std::move(s);
    r.aborted = std::string("pretraining: ") + e.what();
    return r;
  }
  MetaTrainResult<T> r = run_meta_iterations(models, dataset, cfg, std::move(s), observer);
  r.pretrain = report;
  return r;
}

void write_trace_header(std::ostream& os) {
  os << "iteration,L_train,L_val,meta_grad_norm,mean_sigmoid,detector_synced\n";
}

void write_trace_row(std::ostream& os, const MetaIterationTrace& row) {
  const auto old = os.precision(17);
  os << row.iteration << ',' << row.train_loss << ',' << row.val_loss << ','
     << row.meta_grad_norm << ',' << row.mean_sigmoid << ',' << (row.detector_synced ? 1 : 0)
     << '\n';
  os.precision(old);
}

#define MTFAS_INSTANTIATE(T)                                                                     \
  template class Adam<T>;                                                                       \
  template double batch_mse<T>(std::span<const Tensor<T>>, std::span<const Tensor<T>>);         \
  template double train_loss<T>(const MetaModels&, const WeightBundle<T>&,                      \
                                const WeightBundle<T>&, const Batch&);                          \
  template LowerLevelResult<T> lower_level_step<T>(const MetaModels&, const WeightBundle<T>&,   \
                                                   const WeightBundle<T>&, const Batch&, double, \
                                                   std::size_t);                                \
  template ValidationResult<T> validation_loss<T>(const MetaModels&, const WeightBundle<T>&,    \
                                                  const WeightBundle<T>&, const Batch&, bool);  \
  template MetaGradient<T> meta_gradient<T>(const MetaModels&, const LowerLevelResult<T>&,      \
                                            const WeightBundle<T>&, const ValidationResult<T>&, \
                                            const Batch&, double, double);                      \
  template MetaGradient<T> meta_gradient<T>(const MetaModels&, const WeightBundle<T>&,          \
                                            const WeightBundle<T>&, const WeightBundle<T>&,     \
                                            const Batch&, const Batch&, double, double);        \
  template double meta_objective<T>(const MetaModels&, const WeightBundle<T>&,                  \
                                    const WeightBundle<T>&, const WeightBundle<T>&,             \
                                    const Batch&, const Batch&, double, double);                \
  template void momentum_update<T>(WeightBundle<T>&, const WeightBundle<T>&, double);           \
  template MetaState<T> initial_state<T>(const MetaModels&, std::uint64_t);                     \
  template PretrainReport pretrain<T>(const MetaModels&, WeightBundle<T>&, TeacherState<T>&,    \
                                      const Dataset&, const TrainConfig&);                      \
  template MetaTrainResult<T> run_meta_iterations<T>(const MetaModels&, const Dataset&,         \
                                                     const TrainConfig&, MetaState<T>,          \
                                                     const MetaObserver&);                      \
  template MetaTrainResult<T> train_meta_teacher<T>(const MetaModels&, const Dataset&,          \
                                                    const TrainConfig&, const MetaObserver&);

MTFAS_INSTANTIATE(float)
MTFAS_INSTANTIATE(double)
#undef MTFAS_INSTANTIATE

}  // namespace mtfas

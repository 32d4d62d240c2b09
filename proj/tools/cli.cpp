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

#include "mtfas/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mtfas/checkpoint.hpp"
#include "mtfas/config.hpp"
#include "mtfas/meta_trainer.hpp"
#include "mtfas/metrics.hpp"
#include "mtfas/synth_data.hpp"
#include "mtfas/teacher.hpp"
#include "mtfas/toys.hpp"

namespace mtfas {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out;
  std::string precision;
  std::optional<std::uint64_t> seed;

  std::string data;
  std::string init;
  std::string source = "meta_teacher";
  std::string teacher;
  std::string detector;
  std::string split = "all";
  std::string view = "mt_t";
  std::string regime = "constrained";
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? parse_config("") : load_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.data.empty()) cfg.dataset = o.data;
  if (!o.precision.empty()) {
    try {
      cfg.precision = parse_precision(o.precision);
    } catch (const std::exception& e) {
      throw ConfigParseError("precision", 0, e.what());
    }
  }
  cfg.detector_training.seed = cfg.train.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

/// The output directory of one invocation, locked for its lifetime.
class RunDir {
 public:
  explicit RunDir(const RunConfig& cfg) {
    if (cfg.out.empty()) throw UsageError("an output directory is required (--out)");
    path_ = cfg.out;
    lock_ = std::make_unique<RunLock>(path_);
    write_text(path_ / "config.txt", write_config(cfg));
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::unique_ptr<RunLock> lock_;
};

Dataset load_data(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw UsageError("a dataset directory is required (--data)");
  Dataset d = load_dataset(cfg.dataset);
  if (d.config.image_size != cfg.image_size) {
    throw ConfigParseError("image_size", 0,
                           "dataset has " + std::to_string(d.config.image_size) + "x" +
                               std::to_string(d.config.image_size) + " images, config says " +
                               std::to_string(cfg.image_size));
  }
  return d;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
void save_detector(const fs::path& path, const NetworkSpec& spec, const WeightBundle<T>& theta) {
  Checkpoint c = make_checkpoint(spec);
  add_bundle(c, "theta", theta);
  save_checkpoint(path, c);
}

template <typename T>
void save_teacher(const fs::path& path, const NetworkSpec& spec, const TeacherState<T>& st) {
  Checkpoint c = make_checkpoint(spec);
  add_bundle(c, "omega", st.omega);
  add_bundle(c, "omega_hat", st.omega_hat);
  save_checkpoint(path, c);
}

bool has_bundle(const Checkpoint& c, const NetworkSpec& spec, const std::string& bundle) {
  return c.has(bundle + "/" + param_layout(spec)->views().front().name);
}

template <typename T>
WeightBundle<T> load_detector(const std::string& path, const NetworkSpec& spec) {
  if (path.empty()) throw UsageError("a detector checkpoint is required (--detector)");
  return read_bundle<T>(load_checkpoint(path), spec, "theta");
}

/// Teacher weights from a teacher checkpoint (omega) or, for the baseline
/// source, from a detector checkpoint trained on binary maps (theta).
template <typename T>
WeightBundle<T> load_teacher_weights(const std::string& path, const NetworkSpec& spec,
                                     TeacherView view = TeacherView::mt_t) {
  if (path.empty()) throw UsageError("a teacher checkpoint is required (--teacher)");
  const Checkpoint c = load_checkpoint(path);
  if (has_bundle(c, spec, "omega")) {
    return read_bundle<T>(c, spec, view == TeacherView::mt_t ? "omega" : "omega_hat");
  }
  if (view == TeacherView::mt_v) throw UsageError(path + " holds no MT_v weights");
  return read_bundle<T>(c, spec, "theta");
}

std::vector<ProtocolSplit> select_splits(const Dataset& d, const std::string& name) {
  std::vector<ProtocolSplit> all = leave_one_attack_out(d);
  if (name == "all") return all;
  for (ProtocolSplit& s : all) {
    if (s.name == name) return {std::move(s)};
  }
  std::string known;
  for (const ProtocolSplit& s : all) known += " " + s.name;
  throw UsageError("unknown split '" + name + "' (have: all" + known + ")");
}

std::vector<const Sample*> samples_of(const Dataset& d, const std::vector<std::uint64_t>& ids) {
  std::vector<const Sample*> out;
  out.reserve(ids.size());
  for (std::uint64_t id : ids) out.push_back(&d.by_id(id));
  return out;
}

ScoreSet score_set(const std::vector<const Sample*>& samples, const std::vector<double>& scores) {
  ScoreSet s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i]->is_spoof() ? s.spoof : s.live).push_back(scores[i]);
  }
  return s;
}

/// Scores on the split's training ids pick the threshold, test ids are reported.
template <typename T>
MetricsReport evaluate_split(const std::string& name, const NetworkSpec& spec,
                             const WeightBundle<T>& theta, const Dataset& d, const ProtocolSplit& sp) {
  const auto dev = samples_of(d, sp.train_ids);
  const auto test = samples_of(d, sp.test_ids);
  return evaluate(name, score_set(dev, detector_scores(spec, theta, dev)),
                  score_set(test, detector_scores(spec, theta, test)));
}

template <typename F>
int dispatch(Precision p, F&& f) {
  return p == Precision::single ? f.template operator()<float>() : f.template operator()<double>();
}

void print_report(const PretrainReport& r) {
  std::fprintf(stderr, "pretraining: %zu iterations, detector MSE %.6f, teacher MSE %.6f%s\n",
               r.iterations, r.detector_mse, r.teacher_mse, r.skipped ? " (skipped)" : "");
}

std::string report_text(const PretrainReport& r) {
  return "iterations = " + std::to_string(r.iterations) + "\ndetector_mse = " + fmt(r.detector_mse) +
         "\nteacher_mse = " + fmt(r.teacher_mse) + "\nskipped = " + (r.skipped ? "true" : "false") +
         "\n";
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_data(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  RunDir dir(cfg);
  const Dataset d = generate_dataset(cfg.n_live, cfg.n_per_attack, cfg.image_size, cfg.train.seed);
  save_dataset(d, dir.path());
  std::fprintf(stderr, "wrote %zu samples to %s\n", d.samples.size(), dir.path().c_str());
  return kExitOk;
}

int cmd_pretrain(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const Dataset d = load_data(cfg);
  RunDir dir(cfg);
  const MetaModels m = meta_models(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    MetaState<T> st = initial_state<T>(m, cfg.train.seed);
    const PretrainReport r = pretrain(m, st.theta, st.teacher, d, cfg.train);
    save_detector(dir / "detector.ckpt", m.detector, st.theta);
    save_teacher(dir / "teacher.ckpt", m.teacher, st.teacher);
    write_text(dir / "pretrain.txt", report_text(r));
    print_report(r);
    return kExitOk;
  });
}

int cmd_train_meta(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const Dataset d = load_data(cfg);
  RunDir dir(cfg);
  const MetaModels m = meta_models(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    std::ofstream trace(dir / "trace.csv", std::ios::binary | std::ios::trunc);
    if (!trace) throw IoError("cannot write " + (dir / "trace.csv").string());
    write_trace_header(trace);
    const MetaObserver obs = [&](const MetaIterationTrace& row) {
      write_trace_row(trace, row);
      if ((row.iteration + 1) % 100 == 0) {
        std::fprintf(stderr, "iteration %zu: L_val %.6f, |g| %.3e\n", row.iteration + 1, row.val_loss,
                     row.meta_grad_norm);
      }
    };

    MetaTrainResult<T> r;
    if (!o.init.empty()) {
      MetaState<T> start;
      start.theta = load_detector<T>((fs::path(o.init) / "detector.ckpt").string(), m.detector);
      const Checkpoint tc = load_checkpoint(fs::path(o.init) / "teacher.ckpt");
      start.teacher.omega = read_bundle<T>(tc, m.teacher, "omega");
      start.teacher.omega_hat = read_bundle<T>(tc, m.teacher, "omega_hat");
      r = run_meta_iterations(m, d, cfg.train, std::move(start), obs);
    } else {
      r = train_meta_teacher<T>(m, d, cfg.train, obs);
      if (r.pretrain) {
        print_report(*r.pretrain);
        write_text(dir / "pretrain.txt", report_text(*r.pretrain));
      }
    }
    trace.flush();
    if (!trace) throw IoError("write failed for " + (dir / "trace.csv").string());
    save_detector(dir / "detector.ckpt", m.detector, r.state.theta);
    save_teacher(dir / "teacher.ckpt", m.teacher, r.state.teacher);
    if (r.aborted) {
      std::fprintf(stderr, "meta training aborted: %s\n", r.aborted->c_str());
      return kExitNumerical;
    }
    std::fprintf(stderr, "meta training: %zu iterations\n", r.trace.size());
    return kExitOk;
  });
}

template <typename T>
DetectorTrainResult<T> train_on_split(const RunConfig& cfg, const NetworkSpec& det, SupervisionSource src,
                                      const Dataset& d, const std::vector<std::uint64_t>& ids,
                                      const NetworkSpec& tspec, const WeightBundle<T>* teacher) {
  TeacherRef<T> ref;
  if (teacher) ref = {&tspec, teacher};
  return train_detector(det, src, d, ids, cfg.detector_training, ref);
}

std::string epoch_csv(const std::vector<double>& losses) {
  std::string s = "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) s += std::to_string(e + 1) + "," + fmt(losses[e]) + "\n";
  return s;
}

int cmd_train_detector(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  SupervisionSource src;
  try {
    src = parse_source(o.source);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Dataset d = load_data(cfg);
  std::vector<std::uint64_t> ids;
  if (o.split == "all") {
    for (const Sample& s : d.samples) ids.push_back(s.id);
  } else {
    ids = select_splits(d, o.split).front().train_ids;
  }
  const MetaModels m = meta_models(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    std::optional<WeightBundle<T>> teacher;
    if (src != SupervisionSource::pixel_binary) teacher = load_teacher_weights<T>(o.teacher, m.teacher);
    RunDir dir(cfg);
    const DetectorTrainResult<T> r =
        train_on_split<T>(cfg, m.detector, src, d, ids, m.teacher, teacher ? &*teacher : nullptr);
    save_detector(dir / "detector.ckpt", m.detector, r.weights);
    write_text(dir / "losses.csv", epoch_csv(r.epoch_losses));
    std::fprintf(stderr, "detector (%s): loss %.6f -> %.6f\n", std::string(source_name(src)).c_str(),
                 r.initial_loss, r.final_loss);
    return kExitOk;
  });
}

int cmd_eval(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const Dataset d = load_data(cfg);
  const std::vector<ProtocolSplit> splits = select_splits(d, o.split);
  const NetworkSpec spec = detector_spec(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    const WeightBundle<T> theta = load_detector<T>(o.detector, spec);
    RunDir dir(cfg);
    std::string csv = MetricsReport::csv_header() + "\n", text;
    for (const ProtocolSplit& sp : splits) {
      const MetricsReport r = evaluate_split(sp.name, spec, theta, d, sp);
      csv += r.csv_row() + "\n";
      text += r.text_block();
    }
    write_text(dir / "metrics.csv", csv);
    write_text(dir / "report.txt", text);
    std::fputs(text.c_str(), stdout);
    return kExitOk;
  });
}

int cmd_gradcheck(const Options& o) {
  if (!o.precision.empty() && o.precision != "double") {
    throw UsageError("gradcheck runs in double precision only");
  }
  Options dbl = o;
  dbl.precision = "double";
  const RunConfig cfg = resolve_config(dbl);

  const ScalarToyResult toy = scalar_toy_check(0.2, 0.0, 0.0, 0.1);
  const double toy_err = std::abs(toy.implementation - toy.closed_form);

  GradcheckOptions opt;
  opt.coords = cfg.gradcheck_coords;
  opt.step = cfg.gradcheck_step;
  opt.alpha = cfg.gradcheck_alpha;
  opt.mu = cfg.gradcheck_mu;
  opt.seed = cfg.train.seed;
  const GradcheckReport r = meta_gradcheck(opt);
  const bool ok = toy_err <= 1e-10 && r.max_rel_error < cfg.gradcheck_tol;

  if (!cfg.out.empty()) {
    RunDir dir(cfg);
    std::string csv = "index,analytic,numeric,rel_error\n";
    for (const GradcheckCoordinate& c : r.coords) {
      csv += std::to_string(c.index) + "," + fmt(c.analytic) + "," + fmt(c.numeric) + "," + fmt(c.rel_error) + "\n";
    }
    write_text(dir / "gradcheck.csv", csv);
  }
  std::printf("scalar toy: implementation %.17g, closed form %.17g, |diff| %.3e (tol 1e-10)\n",
              toy.implementation, toy.closed_form, toy_err);
  std::printf("meta-gradient: %zu parameters, %zu coordinates, max relative error %.3e (tol %.1e)\n",
              r.parameters, r.coords.size(), r.max_rel_error, cfg.gradcheck_tol);
  std::printf("gradcheck %s\n", ok ? "passed" : "FAILED");
  return ok ? kExitOk : kExitGradcheck;
}

int cmd_export_maps(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  TeacherView view;
  if (o.view == "mt_t") {
    view = TeacherView::mt_t;
  } else if (o.view == "mt_v") {
    view = TeacherView::mt_v;
  } else {
    throw UsageError("--view must be mt_t or mt_v");
  }
  if (o.regime != "constrained" && o.regime != "normalized") {
    throw UsageError("--regime must be constrained or normalized");
  }
  const bool normalized = o.regime == "normalized";
  const Dataset d = load_data(cfg);
  const NetworkSpec spec = teacher_spec(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    const WeightBundle<T> w = load_teacher_weights<T>(o.teacher, spec, view);
    RunDir dir(cfg);
    const std::size_t h = spec.output_shape[1], wd = spec.output_shape[2];
    for (const Sample& s : d.samples) {
      const Tensor<T> map = normalized ? normalized_supervision(w, spec, s).values
                                       : teacher_pass(spec, w, s, false).map;
      std::vector<std::uint8_t> gray(map.size());
      for (std::size_t i = 0; i < map.size(); ++i) {
        const double p = static_cast<double>(map[i]);
        const double v = std::round((normalized ? p : p / 2.0) * 255.0);
        gray[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
      char name[32];
      std::snprintf(name, sizeof name, "%06llu.pgm", static_cast<unsigned long long>(s.id));
      write_pgm(dir / name, wd, h, gray);
    }
    std::fprintf(stderr, "wrote %zu maps to %s\n", d.samples.size(), dir.path().c_str());
    return kExitOk;
  });
}

/// detector(meta_teacher) against detector(pixel_binary) on every split,
/// with identical training budgets.
int cmd_compare(const Options& o) {
  const RunConfig cfg = resolve_config(o);
  const Dataset d = load_data(cfg);
  const std::vector<ProtocolSplit> splits = select_splits(d, o.split);
  const MetaModels m = meta_models(cfg);
  return dispatch(cfg.precision, [&]<typename T>() {
    const WeightBundle<T> teacher = load_teacher_weights<T>(o.teacher, m.teacher);
    RunDir dir(cfg);
    std::string csv = "split,source," + MetricsReport::csv_header() + "\n";
    std::string table = "split                  source         ACER     AUC      EER      HTER\n";
    for (const ProtocolSplit& sp : splits) {
      for (SupervisionSource src : {SupervisionSource::meta_teacher, SupervisionSource::pixel_binary}) {
        const std::string sname(source_name(src));
        const DetectorTrainResult<T> r = train_on_split<T>(
            cfg, m.detector, src, d, sp.train_ids, m.teacher,
            src == SupervisionSource::meta_teacher ? &teacher : nullptr);
        save_detector(dir / (sp.name + "_" + sname + ".ckpt"), m.detector, r.weights);
        const MetricsReport rep = evaluate_split(sp.name + "/" + sname, m.detector, r.weights, d, sp);
        csv += sp.name + "," + sname + "," + rep.csv_row() + "\n";
        char line[160];
        std::snprintf(line, sizeof line, "%-22s %-14s %.4f   %.4f   %.4f   %.4f\n", sp.name.c_str(),
                      sname.c_str(), rep.acer, rep.auc, rep.eer, rep.hter);
        table += line;
      }
    }
    write_text(dir / "compare.csv", csv);
    write_text(dir / "compare.txt", table);
    std::fputs(table.c_str(), stdout);
    return kExitOk;
  });
}

int exit_code_for(const CheckpointError& e) {
  switch (e.kind()) {
    case CheckpointError::Kind::fingerprint:
    case CheckpointError::Kind::precision:
    case CheckpointError::Kind::missing:
      return kExitConfig;
    default:
      return kExitIo;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Meta-teacher training for pixel-wise face anti-spoofing supervision", "mtfas"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Config file (key = value)");
    sub->add_option("--seed", o.seed, "Seed, overrides the config");
    sub->add_option("--out", o.out, "Output directory, overrides the config");
    sub->add_option("--precision", o.precision, "single or double, overrides the config");
  };
  auto data = [&](CLI::App* sub) { sub->add_option("--data", o.data, "Dataset directory"); };

  std::function<int()> run;
  auto add = [&](const char* name, const char* help, std::function<int(const Options&)> fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    sub->callback([&, fn]() { run = [&, fn]() { return fn(o); }; });
    return sub;
  };

  add("gen-data", "Generate the synthetic dataset", cmd_gen_data);
  data(add("pretrain", "Regress detector and teacher toward binary maps", cmd_pretrain));
  {
    CLI::App* s = add("train-meta", "Meta-train the teacher", cmd_train_meta);
    data(s);
    s->add_option("--init", o.init, "Start from a pretrain output directory");
  }
  {
    CLI::App* s = add("train-detector", "Train a detector under one supervision source", cmd_train_detector);
    data(s);
    s->add_option("--source", o.source, "meta_teacher, pixel_binary or baseline_teacher");
    s->add_option("--teacher", o.teacher, "Teacher checkpoint");
    s->add_option("--split", o.split, "Train on this split's training ids, or all samples");
  }
  {
    CLI::App* s = add("eval", "Score a detector on leave-one-attack-out splits", cmd_eval);
    data(s);
    s->add_option("--detector", o.detector, "Detector checkpoint");
    s->add_option("--split", o.split, "Split name or all");
  }
  add("gradcheck", "Check the meta-gradient against finite differences", cmd_gradcheck);
  {
    CLI::App* s = add("export-maps", "Write teacher maps as PGM heatmaps", cmd_export_maps);
    data(s);
    s->add_option("--teacher", o.teacher, "Teacher checkpoint");
    s->add_option("--view", o.view, "mt_t or mt_v");
    s->add_option("--regime", o.regime, "constrained or normalized");
  }
  {
    CLI::App* s = add("compare", "Meta-teacher vs binary supervision on every split", cmd_compare);
    data(s);
    s->add_option("--teacher", o.teacher, "Meta-teacher checkpoint");
    s->add_option("--split", o.split, "Split name or all");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return run();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const ConfigParseError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const DatasetError& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kExitIo;
  } catch (const LockError& e) {
    std::fprintf(stderr, "lock error: %s\n", e.what());
    return kExitIo;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::ios_base::failure& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    // shape mismatches, unusable configurations, invalid batch requests
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace mtfas

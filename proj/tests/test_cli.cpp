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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mtfas/checkpoint.hpp"
#include "mtfas/cli.hpp"
#include "mtfas/config.hpp"
#include "mtfas/synth_data.hpp"
#include "test_util.hpp"

using namespace mtfas;
using mtfas::testing::slurp;
using mtfas::testing::TempDir;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig =
    "image_size = 16\n"
    "n_live = 12\n"
    "n_per_attack = 3\n"
    "widths = 2,2,2\n"
    "M = 2\n"
    "N = 1\n"
    "T = 2\n"
    "alpha = 0.05\n"
    "beta = 0.05\n"
    "pretrain_iters = 3\n"
    "meta_iters = 4\n"
    "detector_epochs = 1\n"
    "detector_batch = 4\n";

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mtfas");
  return run_cli(args);
}

struct Workspace {
  TempDir tmp{"cli"};
  fs::path config;
  fs::path data;

  Workspace() {
    fs::create_directories(tmp.path);
    config = tmp.path / "small.cfg";
    std::ofstream(config) << kSmallConfig;
    data = tmp.path / "data";
    REQUIRE(cli({"gen-data", "--config", config.string(), "--seed", "3", "--out", data.string()}) == 0);
  }
  std::string path(const std::string& name) const { return (tmp.path / name).string(); }
  std::string cfg() const { return config.string(); }
};

/// Dark live faces, bright spoofs: a positive-weight network separates them.
Dataset separable_dataset() {
  Dataset d;
  d.config = {8, 2, 16, 0};
  std::uint64_t id = 0;
  for (int i = 0; i < 8; ++i, ++id) {
    Sample s;
    s.id = id;
    s.image = Tensor<double>(Shape{3, 16, 16}, static_cast<double>(i) / 255.0);
    s.cue_mask = Tensor<double>(Shape{1, 2, 2});
    d.samples.push_back(s);
  }
  for (AttackType a : kAttackTypes) {
    for (int i = 0; i < 2; ++i, ++id) {
      Sample s;
      s.id = id;
      s.label = Label::spoof;
      s.attack = a;
      s.image = Tensor<double>(Shape{3, 16, 16}, static_cast<double>(200 + i) / 255.0);
      s.cue_mask = Tensor<double>(Shape{1, 2, 2});
      s.cue_mask[0] = 1.0;
      d.samples.push_back(s);
    }
  }
  return d;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1") {
  CHECK(cli({}) == kExitUsage);
  CHECK(cli({"frobnicate"}) == kExitUsage);
  CHECK(cli({"gen-data", "--bogus"}) == kExitUsage);
  CHECK(cli({"gen-data"}) == kExitUsage);  // no output directory
  CHECK(cli({"gradcheck", "--precision", "single"}) == kExitUsage);
  CHECK(cli({"--help"}) == kExitOk);
}

TEST_CASE("config problems exit 2") {
  TempDir tmp("cli_cfg");
  fs::create_directories(tmp.path);
  std::ofstream(tmp.path / "bad.cfg") << "gamma = 1.5\n";
  CHECK(cli({"gen-data", "--config", (tmp.path / "bad.cfg").string(), "--out", (tmp.path / "o").string()}) ==
        kExitConfig);
  CHECK(cli({"gen-data", "--precision", "half", "--out", (tmp.path / "o").string()}) == kExitConfig);
  CHECK(cli({"gen-data", "--config", (tmp.path / "missing.cfg").string()}) == kExitIo);
}

TEST_CASE("gradcheck in double precision passes on the defaults") {
  TempDir tmp("cli_gc");
  CHECK(cli({"gradcheck", "--precision", "double", "--out", tmp.path.string()}) == kExitOk);
  CHECK(fs::exists(tmp.path / "gradcheck.csv"));
  CHECK(fs::exists(tmp.path / "config.txt"));
  CHECK_FALSE(fs::exists(tmp.path / ".lock"));
}

TEST_CASE("a failing gradcheck exits 5") {
  TempDir tmp("cli_gc_fail");
  fs::create_directories(tmp.path);
  std::ofstream(tmp.path / "c.cfg") << "gradcheck_step = 0.5\ngradcheck_tol = 1e-12\n";
  CHECK(cli({"gradcheck", "--config", (tmp.path / "c.cfg").string()}) == kExitGradcheck);
}

TEST_CASE("the pipeline runs end to end and is byte-reproducible") {
  Workspace w;
  CHECK(load_dataset(w.data).samples.size() == 24);
  const std::string data = w.data.string();

  CHECK(cli({"pretrain", "--config", w.cfg(), "--data", data, "--out", w.path("pre")}) == 0);
  CHECK(fs::exists(w.path("pre") + "/pretrain.txt"));
  for (const char* run : {"meta1", "meta2"}) {
    CHECK(cli({"train-meta", "--config", w.cfg(), "--data", data, "--init", w.path("pre"), "--out",
               w.path(run)}) == 0);
  }
  CHECK(slurp(w.path("meta1") + "/teacher.ckpt") == slurp(w.path("meta2") + "/teacher.ckpt"));
  CHECK(slurp(w.path("meta1") + "/detector.ckpt") == slurp(w.path("meta2") + "/detector.ckpt"));
  CHECK(slurp(w.path("meta1") + "/trace.csv") == slurp(w.path("meta2") + "/trace.csv"));
  const std::string trace = slurp(w.path("meta1") + "/trace.csv");
  CHECK(std::count(trace.begin(), trace.end(), '\n') == 5);

  CHECK(cli({"train-meta", "--config", w.cfg(), "--data", data, "--seed", "9", "--out", w.path("meta3")}) == 0);
  CHECK(slurp(w.path("meta3") + "/teacher.ckpt") != slurp(w.path("meta1") + "/teacher.ckpt"));

  const std::string teacher = w.path("meta1") + "/teacher.ckpt";
  CHECK(cli({"train-detector", "--config", w.cfg(), "--data", data, "--source", "meta_teacher", "--teacher",
             teacher, "--split", "loo_grid_moire", "--out", w.path("det")}) == 0);
  CHECK(cli({"train-detector", "--config", w.cfg(), "--data", data, "--source", "pixel_binary", "--out",
             w.path("bin")}) == 0);
  CHECK(cli({"train-detector", "--config", w.cfg(), "--data", data, "--source", "baseline_teacher",
             "--teacher", w.path("bin") + "/detector.ckpt", "--out", w.path("base")}) == 0);
  CHECK(cli({"train-detector", "--config", w.cfg(), "--data", data, "--source", "meta_teacher", "--out",
             w.path("noteacher")}) == kExitUsage);
  CHECK(cli({"train-detector", "--config", w.cfg(), "--data", data, "--source", "oracle", "--out",
             w.path("x")}) == kExitUsage);

  CHECK(cli({"eval", "--config", w.cfg(), "--data", data, "--detector", w.path("det") + "/detector.ckpt", "--out",
             w.path("eval")}) == 0);
  const std::string metrics = slurp(w.path("eval") + "/metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);
  CHECK(metrics.find("loo_lowfreq_blur,") != std::string::npos);

  CHECK(cli({"compare", "--config", w.cfg(), "--data", data, "--teacher", teacher, "--out", w.path("cmp1")}) == 0);
  CHECK(cli({"compare", "--config", w.cfg(), "--data", data, "--teacher", teacher, "--out", w.path("cmp2")}) == 0);
  CHECK(slurp(w.path("cmp1") + "/compare.csv") == slurp(w.path("cmp2") + "/compare.csv"));
  const std::string cmp = slurp(w.path("cmp1") + "/compare.csv");
  CHECK(std::count(cmp.begin(), cmp.end(), '\n') == 9);

  CHECK(cli({"export-maps", "--config", w.cfg(), "--data", data, "--teacher", teacher, "--out", w.path("maps")}) == 0);
  CHECK(cli({"export-maps", "--config", w.cfg(), "--data", data, "--teacher", teacher, "--regime", "normalized",
             "--view", "mt_v", "--out", w.path("nmaps")}) == 0);
  CHECK(fs::exists(w.path("maps") + "/000000.pgm"));
  CHECK(fs::exists(w.path("nmaps") + "/000023.pgm"));
}

TEST_CASE("constrained heatmaps store round(p / 2 * 255)") {
  Workspace w;
  RunConfig cfg = parse_config(kSmallConfig);
  const NetworkSpec spec = teacher_spec(cfg);
  // all-zero weights: every spoof pixel is 2 sigmoid(0) = 1
  WeightBundle<float> zero(param_layout(spec));
  Checkpoint c = make_checkpoint(spec);
  add_bundle(c, "omega", zero);
  add_bundle(c, "omega_hat", zero);
  save_checkpoint(w.path("zero.ckpt"), c);
  REQUIRE(cli({"export-maps", "--config", w.cfg(), "--data", w.data.string(), "--teacher", w.path("zero.ckpt"),
               "--out", w.path("m")}) == 0);
  const std::string pgm = slurp(w.path("m") + "/000020.pgm");
  REQUIRE(pgm.size() >= 4);
  for (std::size_t i = pgm.size() - 4; i < pgm.size(); ++i) CHECK(static_cast<unsigned char>(pgm[i]) == 128);
  const std::string live = slurp(w.path("m") + "/000001.pgm");
  for (std::size_t i = live.size() - 4; i < live.size(); ++i) CHECK(live[i] == 0);
}

TEST_CASE("eval on a perfectly separable toy reports ACER 0") {
  TempDir tmp("cli_sep");
  fs::create_directories(tmp.path);
  save_dataset(separable_dataset(), tmp.path / "data");
  std::ofstream(tmp.path / "c.cfg") << "image_size = 16\nwidths = 2,2,2\n";
  const RunConfig cfg = load_config(tmp.path / "c.cfg");
  const NetworkSpec spec = detector_spec(cfg);
  WeightBundle<float> w(param_layout(spec));
  for (std::size_t v = 0; v < w.layout().views().size(); ++v) {
    if (w.layout().views()[v].name.ends_with(".weight")) {
      for (float& x : w.view(v)) x = 0.05f;
    }
  }
  Checkpoint c = make_checkpoint(spec);
  add_bundle(c, "theta", w);
  save_checkpoint(tmp.path / "sep.ckpt", c);
  REQUIRE(cli({"eval", "--config", (tmp.path / "c.cfg").string(), "--data", (tmp.path / "data").string(),
               "--detector", (tmp.path / "sep.ckpt").string(), "--out", (tmp.path / "eval").string()}) == 0);
  const std::string csv = slurp(tmp.path / "eval" / "metrics.csv");
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    REQUIRE(f.size() == 11);
    CHECK(std::stod(f[3]) == 0.0);  // acer
    CHECK(std::stod(f[4]) == 1.0);  // auc
    ++n;
  }
  CHECK(n == 4);
}

TEST_CASE("checkpoint and data problems map to exit codes") {
  Workspace w;
  const std::string data = w.data.string();
  REQUIRE(cli({"pretrain", "--config", w.cfg(), "--data", data, "--out", w.path("pre")}) == 0);
  const std::string det = w.path("pre") + "/detector.ckpt";

  // wrong width: fingerprint mismatch is a configuration problem
  std::ofstream(w.path("wide.cfg")) << kSmallConfig << "width_scale = 2\n";
  CHECK(cli({"eval", "--config", w.path("wide.cfg"), "--data", data, "--detector", det, "--out", w.path("e1")}) ==
        kExitConfig);
  // precision mismatch
  CHECK(cli({"eval", "--config", w.cfg(), "--precision", "double", "--data", data, "--detector", det, "--out",
             w.path("e2")}) == kExitConfig);
  // truncated checkpoint
  std::string bytes = slurp(det);
  bytes.resize(bytes.size() - 8);
  std::ofstream(w.path("cut.ckpt"), std::ios::binary) << bytes;
  CHECK(cli({"eval", "--config", w.cfg(), "--data", data, "--detector", w.path("cut.ckpt"), "--out",
             w.path("e3")}) == kExitIo);
  // missing dataset, unknown split, image size disagreement
  CHECK(cli({"pretrain", "--config", w.cfg(), "--data", w.path("nope"), "--out", w.path("p2")}) == kExitIo);
  CHECK(cli({"eval", "--config", w.cfg(), "--data", data, "--detector", det, "--split", "loo_x", "--out",
             w.path("e4")}) == kExitUsage);
  CHECK(cli({"pretrain", "--data", data, "--out", w.path("p3")}) == kExitConfig);
}

TEST_CASE("a held run directory exits 3") {
  Workspace w;
  RunLock held(w.path("busy"));
  CHECK(cli({"gen-data", "--config", w.cfg(), "--out", w.path("busy")}) == kExitIo);
}

TEST_CASE("a diverging meta run exits 4 and keeps its trace") {
  Workspace w;
  std::ofstream(w.path("hot.cfg")) << kSmallConfig << "no_pretrain = true\n"
                                   << "lower_steps = 1\n";
  std::string text = slurp(w.path("hot.cfg"));
  text.replace(text.find("alpha = 0.05"), 12, "alpha = 1e9");
  text.replace(text.find("beta = 0.05"), 11, "beta = 1e9");
  text.replace(text.find("meta_iters = 4"), 14, "meta_iters = 40");
  std::ofstream(w.path("hot.cfg")) << text;
  CHECK(cli({"train-meta", "--config", w.path("hot.cfg"), "--data", w.data.string(), "--out", w.path("hot")}) ==
        kExitNumerical);
  CHECK(fs::exists(w.path("hot") + "/trace.csv"));
}

}  // TEST_SUITE

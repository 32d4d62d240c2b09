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

#include "mtfas/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mtfas {

ConfigParseError::ConfigParseError(std::string key, std::size_t line, const std::string& message)
    : std::invalid_argument((line ? "line " + std::to_string(line) + ": " : std::string()) + key +
                            ": " + message),
      key_(std::move(key)),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double d = std::stod(v, &pos);
  if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument("not a finite number");
  return d;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw std::invalid_argument("not a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

std::vector<std::size_t> parse_list(const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty() || v == "default") return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::uint64_t n = parse_u64(trim(item));
    if (n == 0) throw std::invalid_argument("widths must be positive");
    out.push_back(n);
  }
  return out;
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  if (v.empty()) return "default";
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DOUBLE_FIELD(name, member)                                                  \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_double(v); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }}
#define SIZE_FIELD(name, member)                                                    \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_u64(v); },    \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define BOOL_FIELD(name, member)                                                    \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); },   \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}
#define STRING_FIELD(name, member)                                                  \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = v; },               \
        [](const RunConfig& c) { return c.member; }}
#define BACKBONE_FIELDS(prefix, member)                                                           \
  Field{prefix "backbone",                                                                        \
        [](RunConfig& c, const std::string& v) {                                                  \
          c.member.kind = parse_backbone(v);                                                      \
          if (c.member.kind == BackboneKind::custom) throw std::invalid_argument("custom backbones are not configurable"); \
        },                                                                                        \
        [](const RunConfig& c) { return std::string(backbone_name(c.member.kind)); }},            \
      SIZE_FIELD(prefix "width_scale", member.width_scale),                                       \
      Field{prefix "widths", [](RunConfig& c, const std::string& v) { c.member.widths = parse_list(v); }, \
            [](const RunConfig& c) { return fmt_list(c.member.widths); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DOUBLE_FIELD("alpha", train.alpha),
      DOUBLE_FIELD("beta", train.beta),
      DOUBLE_FIELD("gamma", train.gamma),
      DOUBLE_FIELD("mu", train.mu),
      SIZE_FIELD("T", train.T),
      SIZE_FIELD("M", train.M),
      SIZE_FIELD("N", train.N),
      SIZE_FIELD("lower_steps", train.lower_steps),
      SIZE_FIELD("pretrain_iters", train.pretrain_iters),
      SIZE_FIELD("meta_iters", train.meta_iters),
      DOUBLE_FIELD("pretrain_lr", train.pretrain_lr),
      SIZE_FIELD("seed", train.seed),
      BOOL_FIELD("no_pretrain", train.ablations.no_pretrain),
      BOOL_FIELD("no_mt_v", train.ablations.no_mt_v),
      BOOL_FIELD("no_detector_sync", train.ablations.no_detector_sync),
      SIZE_FIELD("detector_epochs", detector_training.epochs),
      DOUBLE_FIELD("detector_lr", detector_training.lr),
      SIZE_FIELD("detector_batch", detector_training.batch_size),
      BACKBONE_FIELDS("", detector),
      BACKBONE_FIELDS("teacher_", teacher),
      Field{"precision", [](RunConfig& c, const std::string& v) { c.precision = parse_precision(v); },
            [](const RunConfig& c) { return std::string(precision_name(c.precision)); }},
      SIZE_FIELD("image_size", image_size),
      SIZE_FIELD("n_live", n_live),
      SIZE_FIELD("n_per_attack", n_per_attack),
      STRING_FIELD("dataset", dataset),
      STRING_FIELD("out", out),
      SIZE_FIELD("gradcheck_coords", gradcheck_coords),
      DOUBLE_FIELD("gradcheck_tol", gradcheck_tol),
      DOUBLE_FIELD("gradcheck_step", gradcheck_step),
      DOUBLE_FIELD("gradcheck_alpha", gradcheck_alpha),
      DOUBLE_FIELD("gradcheck_mu", gradcheck_mu),
  };
  return f;
}

/// Constraint check; `line_of` maps keys to the line that set them.
void check(const RunConfig& c, const std::map<std::string, std::size_t>& line_of) {
  auto fail = [&](const std::string& key, const std::string& msg) {
    const auto it = line_of.find(key);
    throw ConfigParseError(key, it == line_of.end() ? 0 : it->second, msg);
  };
  try {
    c.train.validate();
  } catch (const ConfigError& e) {
    fail(e.key(), e.what());
  }
  if (c.detector_training.epochs < 1) fail("detector_epochs", "detector_epochs must be >= 1");
  if (!(c.detector_training.lr > 0.0)) fail("detector_lr", "detector_lr must be > 0");
  if (c.detector_training.batch_size < 1) fail("detector_batch", "detector_batch must be >= 1");
  if (c.detector.width_scale < 1) fail("width_scale", "width_scale must be >= 1");
  if (c.teacher.width_scale < 1) fail("teacher_width_scale", "teacher_width_scale must be >= 1");
  if (!c.detector.widths.empty() && c.detector.widths.size() != default_widths(c.detector.kind).size()) {
    fail("widths", "expected " + std::to_string(default_widths(c.detector.kind).size()) + " widths");
  }
  if (!c.teacher.widths.empty() && c.teacher.widths.size() != default_widths(c.teacher.kind).size()) {
    fail("teacher_widths", "expected " + std::to_string(default_widths(c.teacher.kind).size()) + " widths");
  }
  if (c.image_size == 0 || c.image_size % 8 != 0) fail("image_size", "image_size must be a positive multiple of 8");
  if (c.n_live < 1) fail("n_live", "n_live must be >= 1");
  if (c.n_per_attack < 1) fail("n_per_attack", "n_per_attack must be >= 1");
  if (c.gradcheck_coords < 1) fail("gradcheck_coords", "gradcheck_coords must be >= 1");
  if (!(c.gradcheck_tol > 0.0)) fail("gradcheck_tol", "gradcheck_tol must be > 0");
  if (!(c.gradcheck_step > 0.0)) fail("gradcheck_step", "gradcheck_step must be > 0");
  if (!(c.gradcheck_alpha > 0.0)) fail("gradcheck_alpha", "gradcheck_alpha must be > 0");
  if (!(c.gradcheck_mu >= 0.0)) fail("gradcheck_mu", "gradcheck_mu must be >= 0");
}

}  // namespace

void RunConfig::validate() const { check(*this, {}); }

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::size_t> line_of;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigParseError(line, line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto& fs = fields();
    const auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return f.key == key; });
    if (it == fs.end()) throw ConfigParseError(key, line_no, "unknown key");
    if (line_of.count(key)) throw ConfigParseError(key, line_no, "duplicate key");
    try {
      it->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigParseError(key, line_no, "cannot parse '" + value + "': " + e.what());
    }
    line_of[key] = line_no;
  }
  // teacher architecture follows the detector unless set explicitly
  if (!line_of.count("teacher_backbone")) cfg.teacher.kind = cfg.detector.kind;
  if (!line_of.count("teacher_width_scale")) cfg.teacher.width_scale = cfg.detector.width_scale;
  if (!line_of.count("teacher_widths") && cfg.teacher.kind == cfg.detector.kind) {
    cfg.teacher.widths = cfg.detector.widths;
  }
  check(cfg, line_of);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string write_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

NetworkSpec detector_spec(const RunConfig& cfg) {
  return build_backbone(cfg.detector.kind, cfg.detector.width_scale,
                        Shape{3, cfg.image_size, cfg.image_size}, cfg.detector.widths);
}

NetworkSpec teacher_spec(const RunConfig& cfg) {
  return build_backbone(cfg.teacher.kind, cfg.teacher.width_scale,
                        Shape{3, cfg.image_size, cfg.image_size}, cfg.teacher.widths);
}

MetaModels meta_models(const RunConfig& cfg) { return {detector_spec(cfg), teacher_spec(cfg)}; }

}  // namespace mtfas

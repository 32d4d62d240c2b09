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
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mtfas/meta_trainer.hpp"
#include "mtfas/network.hpp"
#include "mtfas/tensor.hpp"

namespace mtfas {

/// A config file problem, carrying the offending key and 1-based line (0 if
/// the key was not present in the file).
class ConfigParseError : public std::invalid_argument {
 public:
  ConfigParseError(std::string key, std::size_t line, const std::string& message);
  const std::string& key() const { return key_; }
  std::size_t line() const { return line_; }

 private:
  std::string key_;
  std::size_t line_;
};

struct BackboneConfig {
  BackboneKind kind = BackboneKind::fas_dr_light;
  std::size_t width_scale = 1;
  std::vector<std::size_t> widths;  // empty: backbone defaults

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct RunConfig {
  TrainConfig train;
  DetectorTrainConfig detector_training;

  BackboneConfig detector;
  BackboneConfig teacher;

  Precision precision = Precision::single;
  std::size_t image_size = 64;
  std::size_t n_live = 200;
  std::size_t n_per_attack = 50;

  std::string dataset;  // path, may be given on the command line instead
  std::string out;

  // gradcheck toy
  std::size_t gradcheck_coords = 50;
  double gradcheck_tol = 1e-5;
  double gradcheck_step = 1e-4;
  double gradcheck_alpha = 0.1;
  double gradcheck_mu = 0.01;

  /// Re-checks every constraint; throws ConfigParseError with line 0.
  void validate() const;
};

/// `key = value` per line, `#` starts a comment. Absent keys keep their
/// defaults; unknown keys, malformed values and violated constraints throw
/// ConfigParseError naming the key and line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its resolved value, in parse_config's format.
std::string write_config(const RunConfig& cfg);

/// Keys accepted by parse_config, in write_config order.
const std::vector<std::string>& config_keys();

NetworkSpec detector_spec(const RunConfig& cfg);
NetworkSpec teacher_spec(const RunConfig& cfg);
MetaModels meta_models(const RunConfig& cfg);

}  // namespace mtfas

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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mtfas/tensor.hpp"

namespace mtfas {

enum class Label { live, spoof };

enum class AttackType { none, grid_moire, border_band, patch_occluder, lowfreq_blur };

inline constexpr AttackType kAttackTypes[] = {AttackType::grid_moire, AttackType::border_band,
                                              AttackType::patch_occluder, AttackType::lowfreq_blur};

std::string_view label_name(Label label);
Label parse_label(std::string_view name);
std::string_view attack_name(AttackType attack);
AttackType parse_attack(std::string_view name);

struct Sample {
  std::uint64_t id = 0;
  Tensor<double> image;     // (3, H, W), values k/255
  Label label = Label::live;
  AttackType attack = AttackType::none;
  Tensor<double> cue_mask;  // (1, H/8, W/8), values in {0, 1}

  bool is_spoof() const { return label == Label::spoof; }
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct GenerationConfig {
  std::size_t n_live = 0;
  std::size_t n_per_attack = 0;
  std::size_t image_size = 64;
  std::uint64_t seed = 0;

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  GenerationConfig config;

  const Sample& by_id(std::uint64_t id) const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ProtocolSplit {
  std::string name;
  std::vector<std::uint64_t> train_ids;
  std::vector<std::uint64_t> test_ids;
  AttackType held_out = AttackType::none;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A spoof sample together with the clean image it was composited on and the
/// pixel-level footprint of its artifact (1 inside, 0 outside).
struct GeneratedSample {
  Sample sample;
  Tensor<double> base;
  Tensor<double> footprint;  // (1, H, W)
};

/// Generates one sample. Spoof images are a live-style base with one artifact;
/// the generator retries placement until the artifact is clearly visible
/// inside its cue region. Deterministic in (seed, id).
GeneratedSample generate_sample(std::uint64_t id, AttackType attack, std::size_t image_size,
                                std::uint64_t seed);

/// Block-max downsampling of a (1, H, W) footprint by 8.
Tensor<double> block_max_mask(const Tensor<double>& footprint);

/// Mean |spoof - base| over pixels inside / outside the cue mask blocks.
struct ArtifactEnergy {
  double inside = 0.0;
  double outside = 0.0;
};
ArtifactEnergy artifact_energy(const GeneratedSample& g);

/// Live samples get ids [0, n_live); each attack type then gets n_per_attack ids.
Dataset generate_dataset(std::size_t n_live, std::size_t n_per_attack, std::size_t image_size,
                         std::uint64_t seed);

/// One split per attack type present. Test holds the attack's spoofs plus a
/// rotating 25% chunk of the live samples; train holds everything else.
std::vector<ProtocolSplit> leave_one_attack_out(const Dataset& dataset);

/// Writes manifest.csv, generation.txt and one PPM/PGM pair per sample.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Binary PPM (P6) / PGM (P5), 8-bit.
void write_ppm(const std::filesystem::path& path, const Tensor<double>& rgb);
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray);
Tensor<double> read_ppm(const std::filesystem::path& path);
Tensor<double> read_pgm_mask(const std::filesystem::path& path);

}  // namespace mtfas

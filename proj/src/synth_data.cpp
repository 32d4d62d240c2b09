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

#include "mtfas/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "mtfas/rng.hpp"
#include "mtfas/sha256.hpp"
#include "parallel.hpp"

namespace mtfas {

namespace fs = std::filesystem;

std::string_view label_name(Label label) { return label == Label::live ? "live" : "spoof"; }

Label parse_label(std::string_view name) {
  if (name == "live") return Label::live;
  if (name == "spoof") return Label::spoof;
  throw std::invalid_argument("unknown label '" + std::string(name) + "'");
}

std::string_view attack_name(AttackType attack) {
  switch (attack) {
    case AttackType::none: return "none";
    case AttackType::grid_moire: return "grid_moire";
    case AttackType::border_band: return "border_band";
    case AttackType::patch_occluder: return "patch_occluder";
    case AttackType::lowfreq_blur: return "lowfreq_blur";
  }
  return "none";
}

AttackType parse_attack(std::string_view name) {
  for (AttackType a : {AttackType::none, AttackType::grid_moire, AttackType::border_band,
                       AttackType::patch_occluder, AttackType::lowfreq_blur}) {
    if (attack_name(a) == name) return a;
  }
  throw std::invalid_argument("unknown attack type '" + std::string(name) + "'");
}

const Sample& Dataset::by_id(std::uint64_t id) const {
  // ids are dense in generated datasets; fall back to a scan otherwise
  if (id < samples.size() && samples[id].id == id) return samples[id];
  for (const Sample& s : samples) {
    if (s.id == id) return s;
  }
  throw std::out_of_range("no sample with id " + std::to_string(id));
}

namespace {

constexpr double kMinArtifactEnergy = 0.03;
constexpr int kMaxPlacementTries = 64;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }
double quantize(double v) { return std::round(clamp01(v) * 255.0) / 255.0; }

void quantize_all(Tensor<double>& t) {
  for (double& v : t.data()) v = quantize(v);
}

/// Smooth elliptical "face" over a darker background, lit by a linear
/// gradient, with bilinear value noise and a per-image colour cast.
Tensor<double> live_base(Rng& rng, std::size_t S) {
  const double s = static_cast<double>(S);
  const double cx = s * (0.5 + rng.uniform(-0.08, 0.08));
  const double cy = s * (0.5 + rng.uniform(-0.08, 0.08));
  const double rx = s * rng.uniform(0.28, 0.40);
  const double ry = s * rng.uniform(0.32, 0.44);
  const double bg = rng.uniform(0.10, 0.35);
  const double face = rng.uniform(0.55, 0.85);
  const double gx = rng.uniform(-0.12, 0.12);
  const double gy = rng.uniform(-0.12, 0.12);
  double cast[3];
  for (double& c : cast) c = 1.0 + rng.uniform(-0.10, 0.10);
  constexpr double skin[3] = {1.05, 0.90, 0.80};

  constexpr std::size_t L = 9;
  double lattice[L][L];
  for (auto& row : lattice)
    for (double& v : row) v = rng.uniform(-1.0, 1.0);
  constexpr double noise_amp = 0.04;

  Tensor<double> img(Shape{3, S, S});
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / s * (L - 1);
      const double v = (static_cast<double>(y) + 0.5) / s * (L - 1);
      const auto iu = std::min<std::size_t>(static_cast<std::size_t>(u), L - 2);
      const auto iv = std::min<std::size_t>(static_cast<std::size_t>(v), L - 2);
      const double fu = u - static_cast<double>(iu), fv = v - static_cast<double>(iv);
      const double n = (1 - fu) * (1 - fv) * lattice[iv][iu] + fu * (1 - fv) * lattice[iv][iu + 1] +
                       (1 - fu) * fv * lattice[iv + 1][iu] + fu * fv * lattice[iv + 1][iu + 1];

      const double dx = (static_cast<double>(x) - cx) / rx;
      const double dy = (static_cast<double>(y) - cy) / ry;
      const double r = std::sqrt(dx * dx + dy * dy);
      const double t = clamp01((1.15 - r) / 0.3);
      const double shade = face * (1.0 - 0.25 * r * r);
      const double lum = bg * (1 - t) + shade * t +
                         gx * (static_cast<double>(x) / s - 0.5) +
                         gy * (static_cast<double>(y) / s - 0.5) + noise_amp * n;
      for (std::size_t c = 0; c < 3; ++c) {
        const double tint = 1.0 + t * (skin[c] - 1.0);
        img.at(c, y, x) = clamp01(lum * cast[c] * tint);
      }
    }
  }
  return img;
}

struct Rect {
  std::size_t x0, y0, x1, y1;
};

Rect random_rect(Rng& rng, std::size_t S, double lo, double hi) {
  const double s = static_cast<double>(S);
  const auto w = static_cast<std::size_t>(std::round(s * rng.uniform(lo, hi)));
  const auto h = static_cast<std::size_t>(std::round(s * rng.uniform(lo, hi)));
  const std::size_t x0 = rng.below(S - w + 1);
  const std::size_t y0 = rng.below(S - h + 1);
  return {x0, y0, x0 + w, y0 + h};
}

void apply_grid_moire(Rng& rng, const Tensor<double>& base, Tensor<double>& img, Tensor<double>& fp) {
  const std::size_t S = base.dim(1);
  const Rect r = random_rect(rng, S, 0.30, 0.55);
  const double period = rng.uniform(2.5, 4.5);
  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double amp = rng.uniform(0.15, 0.25);
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const double u = static_cast<double>(x) * ca + static_cast<double>(y) * sa;
      const double v = -static_cast<double>(x) * sa + static_cast<double>(y) * ca;
      for (std::size_t c = 0; c < 3; ++c) {
        const double phase = 0.7 * static_cast<double>(c);
        const double g = 0.5 * (std::sin(2 * std::numbers::pi * u / period + phase) +
                                std::sin(2 * std::numbers::pi * v / (1.1 * period)));
        img.at(c, y, x) = clamp01(base.at(c, y, x) + amp * g);
      }
      fp.at(0, y, x) = 1.0;
    }
  }
}

void apply_border_band(Rng& rng, const Tensor<double>& base, Tensor<double>& img, Tensor<double>& fp) {
  const std::size_t S = base.dim(1);
  const std::size_t band = S / 16 + rng.below(std::max<std::size_t>(1, 6 * S / 64));
  // top, bottom, left, right; a full frame at small sizes would cover every block
  bool side[4];
  do {
    for (bool& b : side) b = rng.uniform() < 0.75;
  } while (!(side[0] || side[1] || side[2] || side[3]));
  double color[3];
  for (double& c : color) c = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.1) : rng.uniform(0.9, 1.0);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const bool in = (side[0] && y < band) || (side[1] && y >= S - band) ||
                      (side[2] && x < band) || (side[3] && x >= S - band);
      if (!in) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = clamp01(0.15 * base.at(c, y, x) + 0.85 * color[c]);
      }
      fp.at(0, y, x) = 1.0;
    }
  }
}

void apply_patch_occluder(Rng& rng, const Tensor<double>& base, Tensor<double>& img,
                          Tensor<double>& fp) {
  const std::size_t S = base.dim(1);
  const Rect r = random_rect(rng, S, 0.20, 0.40);
  double color[3];
  for (double& c : color) c = rng.uniform(0.05, 0.95);
  const double texture = rng.uniform(0.01, 0.03);
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const double checker = ((x / 2 + y / 2) % 2 == 0) ? texture : -texture;
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = clamp01(color[c] + checker);
      fp.at(0, y, x) = 1.0;
    }
  }
}

void apply_lowfreq_blur(Rng& rng, const Tensor<double>& base, Tensor<double>& img,
                        Tensor<double>& fp) {
  const auto S = static_cast<std::ptrdiff_t>(base.dim(1));
  const Rect r = random_rect(rng, base.dim(1), 0.30, 0.55);
  const std::ptrdiff_t radius = 3;
  const double contrast = rng.uniform(0.25, 0.45);
  const double haze = rng.uniform(0.06, 0.12);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t y = r.y0; y < r.y1; ++y)
      for (std::size_t x = r.x0; x < r.x1; ++x) mean += base.at(c, y, x);
    mean /= static_cast<double>((r.y1 - r.y0) * (r.x1 - r.x0));
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      for (std::size_t x = r.x0; x < r.x1; ++x) {
        double acc = 0.0;
        int n = 0;
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy;
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + dx;
            if (yy < 0 || yy >= S || xx < 0 || xx >= S) continue;
            acc += base.at(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            ++n;
          }
        }
        const double blurred = acc / n;
        img.at(c, y, x) = clamp01(mean + contrast * (blurred - mean) + haze);
      }
    }
  }
  for (std::size_t y = r.y0; y < r.y1; ++y)
    for (std::size_t x = r.x0; x < r.x1; ++x) fp.at(0, y, x) = 1.0;
}

double mask_fraction(const Tensor<double>& mask) {
  double ones = 0.0;
  for (double v : mask.data()) ones += v;
  return ones / static_cast<double>(mask.size());
}

}  // namespace

Tensor<double> block_max_mask(const Tensor<double>& footprint) {
  const std::size_t H = footprint.dim(1), W = footprint.dim(2);
  Tensor<double> mask(Shape{1, H / 8, W / 8});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      if (footprint.at(0, y, x) > 0.0) mask.at(0, y / 8, x / 8) = 1.0;
  return mask;
}

ArtifactEnergy artifact_energy(const GeneratedSample& g) {
  const Tensor<double>& img = g.sample.image;
  const Tensor<double>& mask = g.sample.cue_mask;
  double in = 0.0, out = 0.0;
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    for (std::size_t y = 0; y < img.dim(1); ++y) {
      for (std::size_t x = 0; x < img.dim(2); ++x) {
        const double e = std::abs(img.at(c, y, x) - g.base.at(c, y, x));
        if (mask.at(0, y / 8, x / 8) > 0.0) {
          in += e;
          ++n_in;
        } else {
          out += e;
          ++n_out;
        }
      }
    }
  }
  return {n_in ? in / static_cast<double>(n_in) : 0.0, n_out ? out / static_cast<double>(n_out) : 0.0};
}

GeneratedSample generate_sample(std::uint64_t id, AttackType attack, std::size_t image_size,
                                std::uint64_t seed) {
  if (image_size == 0 || image_size % 8 != 0) {
    throw std::invalid_argument("image size " + std::to_string(image_size) +
                                " is not a positive multiple of 8");
  }
  const std::size_t S = image_size;
  Rng rng(mix_seed(seed, id));
  GeneratedSample g;
  g.base = live_base(rng, S);
  quantize_all(g.base);
  g.sample.id = id;
  g.sample.attack = attack;
  g.sample.label = attack == AttackType::none ? Label::live : Label::spoof;

  if (attack == AttackType::none) {
    g.sample.image = g.base;
    g.footprint = Tensor<double>(Shape{1, S, S});
    g.sample.cue_mask = Tensor<double>(Shape{1, S / 8, S / 8});
    return g;
  }

  for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
    Tensor<double> img = g.base;
    Tensor<double> fp(Shape{1, S, S});
    switch (attack) {
      case AttackType::grid_moire: apply_grid_moire(rng, g.base, img, fp); break;
      case AttackType::border_band: apply_border_band(rng, g.base, img, fp); break;
      case AttackType::patch_occluder: apply_patch_occluder(rng, g.base, img, fp); break;
      case AttackType::lowfreq_blur: apply_lowfreq_blur(rng, g.base, img, fp); break;
      case AttackType::none: break;
    }
    quantize_all(img);
    g.sample.image = std::move(img);
    g.footprint = std::move(fp);
    g.sample.cue_mask = block_max_mask(g.footprint);
    const double frac = mask_fraction(g.sample.cue_mask);
    if (frac <= 0.0 || frac > 0.75) continue;
    const ArtifactEnergy e = artifact_energy(g);
    if (e.inside >= kMinArtifactEnergy && e.inside >= 5.0 * e.outside) return g;
  }
  throw std::runtime_error("generate_sample: could not place a visible " +
                           std::string(attack_name(attack)) + " artifact for sample " +
                           std::to_string(id));
}

Dataset generate_dataset(std::size_t n_live, std::size_t n_per_attack, std::size_t image_size,
                         std::uint64_t seed) {
  if (n_live == 0 || n_per_attack == 0) {
    throw std::invalid_argument("generate_dataset: counts must be >= 1");
  }
  if (image_size == 0 || image_size % 8 != 0) {
    throw std::invalid_argument("generate_dataset: image size must be a positive multiple of 8");
  }
  Dataset d;
  d.config = {n_live, n_per_attack, image_size, seed};
  const std::size_t total = n_live + n_per_attack * std::size(kAttackTypes);
  d.samples.resize(total);
  detail::for_each_index(total, [&](std::size_t i) {
    const AttackType a = i < n_live ? AttackType::none : kAttackTypes[(i - n_live) / n_per_attack];
    d.samples[i] = generate_sample(i, a, image_size, seed).sample;
  });
  return d;
}

std::vector<ProtocolSplit> leave_one_attack_out(const Dataset& dataset) {
  std::vector<AttackType> attacks;
  std::vector<std::uint64_t> lives;
  for (const Sample& s : dataset.samples) {
    if (s.label == Label::live) {
      lives.push_back(s.id);
    } else if (std::find(attacks.begin(), attacks.end(), s.attack) == attacks.end()) {
      attacks.push_back(s.attack);
    }
  }
  if (attacks.size() < 2) {
    throw std::invalid_argument("leave_one_attack_out needs at least 2 attack types, found " +
                                std::to_string(attacks.size()));
  }
  std::sort(attacks.begin(), attacks.end());
  std::sort(lives.begin(), lives.end());
  const std::size_t chunk = std::max<std::size_t>(1, lives.size() / 4);

  std::vector<ProtocolSplit> splits;
  for (std::size_t k = 0; k < attacks.size(); ++k) {
    ProtocolSplit sp;
    sp.held_out = attacks[k];
    sp.name = "loo_" + std::string(attack_name(attacks[k]));
    std::vector<bool> test_live(lives.size(), false);
    for (std::size_t j = 0; j < chunk && j < lives.size(); ++j) {
      test_live[(k * chunk + j) % lives.size()] = true;
    }
    for (const Sample& s : dataset.samples) {
      if (s.label == Label::live) {
        const auto pos = static_cast<std::size_t>(
            std::lower_bound(lives.begin(), lives.end(), s.id) - lives.begin());
        (test_live[pos] ? sp.test_ids : sp.train_ids).push_back(s.id);
      } else {
        (s.attack == attacks[k] ? sp.test_ids : sp.train_ids).push_back(s.id);
      }
    }
    splits.push_back(std::move(sp));
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_bytes(const fs::path& path, const std::string& header,
                 const std::vector<std::uint8_t>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw DatasetError("write failed for " + path.string());
}

struct Netpbm {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

Netpbm parse_netpbm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  Netpbm h;
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    if (t.empty()) throw DatasetError("truncated header in " + path.string());
    return t;
  };
  try {
    h.magic = token();
    h.width = std::stoul(token());
    h.height = std::stoul(token());
    h.maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw DatasetError("malformed header in " + path.string());
  }
  ++pos;  // single whitespace before raster
  h.data_offset = pos;
  return h;
}

std::string hex_field(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::vector<std::uint8_t> all(a);
  all.insert(all.end(), b.begin(), b.end());
  return to_hex(sha256(all));
}

std::string image_file_name(std::uint64_t id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id << ".ppm";
  return os.str();
}

std::string mask_file_name(std::uint64_t id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id << "_mask.pgm";
  return os.str();
}

std::vector<std::uint8_t> mask_bytes(const Tensor<double>& mask) {
  std::vector<std::uint8_t> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] > 0.5 ? 255 : 0;
  return out;
}

}  // namespace

void write_ppm(const fs::path& path, const Tensor<double>& rgb) {
  const std::size_t H = rgb.dim(1), W = rgb.dim(2);
  std::vector<std::uint8_t> body(3 * H * W);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        body[(y * W + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(clamp01(rgb.at(c, y, x)) * 255.0));
  write_bytes(path, "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n", body);
}

void write_pgm(const fs::path& path, std::size_t width, std::size_t height,
               const std::vector<std::uint8_t>& gray) {
  write_bytes(path, "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n", gray);
}

namespace {

Tensor<double> decode_ppm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  const Netpbm h = parse_netpbm(bytes, path);
  if (h.magic != "P6" || h.maxval != 255 || h.width == 0 || h.height == 0) {
    throw DatasetError("unsupported image format in " + path.string());
  }
  if (bytes.size() != h.data_offset + 3 * h.width * h.height) {
    throw DatasetError("raster size mismatch in " + path.string());
  }
  Tensor<double> img(Shape{3, h.height, h.width});
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = bytes[h.data_offset + (y * h.width + x) * 3 + c] / 255.0;
  return img;
}

Tensor<double> decode_pgm_mask(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  const Netpbm h = parse_netpbm(bytes, path);
  if (h.magic != "P5" || h.maxval != 255 || h.width == 0 || h.height == 0) {
    throw DatasetError("unsupported mask format in " + path.string());
  }
  if (bytes.size() != h.data_offset + h.width * h.height) {
    throw DatasetError("raster size mismatch in " + path.string());
  }
  Tensor<double> mask(Shape{1, h.height, h.width});
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const std::uint8_t v = bytes[h.data_offset + i];
    if (v != 0 && v != 255) throw DatasetError("mask value " + std::to_string(v) + " in " + path.string());
    mask[i] = v == 255 ? 1.0 : 0.0;
  }
  return mask;
}

}  // namespace

Tensor<double> read_ppm(const fs::path& path) { return decode_ppm(read_bytes(path), path); }
Tensor<double> read_pgm_mask(const fs::path& path) { return decode_pgm_mask(read_bytes(path), path); }

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream gen(dir / "generation.txt", std::ios::trunc);
    if (!gen) throw DatasetError("cannot write " + (dir / "generation.txt").string());
    gen << "n_live = " << dataset.config.n_live << '\n'
        << "n_per_attack = " << dataset.config.n_per_attack << '\n'
        << "image_size = " << dataset.config.image_size << '\n'
        << "seed = " << dataset.config.seed << '\n';
  }

  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw DatasetError("cannot write " + (dir / "manifest.csv").string());
  manifest << "id,label,attack_type,image_file,mask_file,sha256\n";
  for (const Sample& s : dataset.samples) {
    const std::string img_name = image_file_name(s.id);
    const std::string mask_name = mask_file_name(s.id);
    write_ppm(dir / img_name, s.image);
    write_pgm(dir / mask_name, s.cue_mask.dim(2), s.cue_mask.dim(1), mask_bytes(s.cue_mask));
    const std::string digest = hex_field(read_bytes(dir / img_name), read_bytes(dir / mask_name));
    manifest << s.id << ',' << label_name(s.label) << ',' << attack_name(s.attack) << ','
             << img_name << ',' << mask_name << ',' << digest << '\n';
  }
  if (!manifest) throw DatasetError("write failed for manifest.csv");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("not a dataset directory: " + dir.string());
  Dataset d;
  {
    std::ifstream gen(dir / "generation.txt");
    if (!gen) throw DatasetError("missing generation.txt in " + dir.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(gen, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    try {
      d.config.n_live = std::stoul(kv.at("n_live"));
      d.config.n_per_attack = std::stoul(kv.at("n_per_attack"));
      d.config.image_size = std::stoul(kv.at("image_size"));
      d.config.seed = std::stoull(kv.at("seed"));
    } catch (const std::exception&) {
      throw DatasetError("malformed generation.txt in " + dir.string());
    }
  }

  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw DatasetError("missing manifest.csv in " + dir.string());
  std::string line;
  std::getline(manifest, line);
  if (line != "id,label,attack_type,image_file,mask_file,sha256") {
    throw DatasetError("malformed manifest header in " + dir.string());
  }
  std::size_t row = 1;
  while (std::getline(manifest, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw DatasetError("manifest row " + std::to_string(row) + ": expected 6 fields");
    Sample s;
    try {
      s.id = std::stoull(f[0]);
      s.label = parse_label(f[1]);
      s.attack = parse_attack(f[2]);
    } catch (const std::exception& e) {
      throw DatasetError("manifest row " + std::to_string(row) + ": " + e.what());
    }
    const auto img_bytes = read_bytes(dir / f[3]);
    const auto mask_raw = read_bytes(dir / f[4]);
    if (hex_field(img_bytes, mask_raw) != f[5]) {
      throw DatasetError("checksum mismatch for sample " + f[0] + " (" + f[3] + ", " + f[4] + ")");
    }
    s.image = decode_ppm(img_bytes, dir / f[3]);
    s.cue_mask = decode_pgm_mask(mask_raw, dir / f[4]);
    const bool live = s.label == Label::live;
    const bool none = s.attack == AttackType::none;
    const bool empty_mask = mask_fraction(s.cue_mask) == 0.0;
    if (live != none || live != empty_mask) {
      throw DatasetError("manifest row " + std::to_string(row) + ": label, attack and mask disagree");
    }
    d.samples.push_back(std::move(s));
  }

  std::size_t images = 0, masks = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".ppm") ++images;
    if (name.size() > 9 && name.ends_with("_mask.pgm")) ++masks;
  }
  if (images != d.samples.size() || masks != d.samples.size()) {
    throw DatasetError("manifest lists " + std::to_string(d.samples.size()) + " samples but " +
                       dir.string() + " holds " + std::to_string(images) + " images and " +
                       std::to_string(masks) + " masks");
  }
  return d;
}

}  // namespace mtfas

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
#include <set>

#include "doctest.h"
#include "mtfas/synth_data.hpp"
#include "test_util.hpp"

using namespace mtfas;
namespace fs = std::filesystem;

using mtfas::testing::TempDir;

TEST_SUITE("synth_data") {

TEST_CASE("8 live + 2 per attack at 64 gives 16 samples with 8x8 masks") {
  const Dataset d = generate_dataset(8, 2, 64, 1);
  REQUIRE(d.samples.size() == 16);
  std::size_t live = 0;
  for (const Sample& s : d.samples) {
    CHECK(s.image.shape() == Shape{3, 64, 64});
    CHECK(s.cue_mask.shape() == Shape{1, 8, 8});
    live += s.label == Label::live;
  }
  CHECK(live == 8);
  for (AttackType a : kAttackTypes) {
    CHECK(std::count_if(d.samples.begin(), d.samples.end(), [&](const Sample& s) { return s.attack == a; }) == 2);
  }
}

TEST_CASE("generation is deterministic in the seed") {
  CHECK(generate_dataset(4, 2, 32, 9) == generate_dataset(4, 2, 32, 9));
  CHECK_FALSE(generate_dataset(4, 2, 32, 9) == generate_dataset(4, 2, 32, 10));
}

TEST_CASE("label, attack type and cue mask agree; pixels are k/255 in [0, 1]") {
  const Dataset d = generate_dataset(20, 10, 64, 2);
  for (const Sample& s : d.samples) {
    const bool live = s.label == Label::live;
    CHECK(live == (s.attack == AttackType::none));
    std::size_t ones = 0;
    for (double v : s.cue_mask.data()) {
      CHECK((v == 0.0 || v == 1.0));
      ones += v == 1.0;
    }
    if (live) {
      CHECK(ones == 0);
    } else {
      CHECK(ones >= 1);
      CHECK(static_cast<double>(ones) <= 0.75 * static_cast<double>(s.cue_mask.size()));
    }
    for (double v : s.image.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(std::round(v * 255.0) / 255.0 == v);
    }
  }
}

TEST_CASE("artifact energy inside the cue region is at least 5x outside") {
  std::uint64_t id = 0;
  for (AttackType a : kAttackTypes) {
    for (int i = 0; i < 25; ++i, ++id) {
      const GeneratedSample g = generate_sample(id, a, 64, 3);
      const ArtifactEnergy e = artifact_energy(g);
      INFO(attack_name(a) << " id " << id);
      CHECK(e.inside > 0.0);
      CHECK(e.inside >= 5.0 * e.outside);
    }
  }
}

TEST_CASE("block-max downsampling of the footprint reproduces the cue mask") {
  std::uint64_t id = 100;
  for (AttackType a : kAttackTypes) {
    for (int i = 0; i < 10; ++i, ++id) {
      const GeneratedSample g = generate_sample(id, a, 64, 4);
      CHECK(block_max_mask(g.footprint) == g.sample.cue_mask);
      // brute force: block is on iff any footprint pixel inside it is on
      for (std::size_t by = 0; by < 8; ++by)
        for (std::size_t bx = 0; bx < 8; ++bx) {
          bool any = false;
          for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) any |= g.footprint.at(0, by * 8 + y, bx * 8 + x) > 0.0;
          CHECK((g.sample.cue_mask.at(0, by, bx) == 1.0) == any);
        }
    }
  }
}

TEST_CASE("the live base is the spoof image outside the footprint") {
  const GeneratedSample live = generate_sample(5, AttackType::none, 32, 1);
  CHECK(live.sample.image == live.base);
  const GeneratedSample s = generate_sample(5, AttackType::patch_occluder, 32, 1);
  CHECK(s.base == live.base);
}

TEST_CASE("ids are unique and class counts follow the configuration") {
  const Dataset d = generate_dataset(3000, 500, 16, 5);
  std::set<std::uint64_t> ids;
  for (const Sample& s : d.samples) ids.insert(s.id);
  CHECK(ids.size() == 5000);
  CHECK(*ids.rbegin() == 4999);
  CHECK(d.by_id(3000).attack == kAttackTypes[0]);
  CHECK(d.by_id(4999).attack == kAttackTypes[3]);
  CHECK_THROWS(d.by_id(5000));
}

TEST_CASE("bad generation arguments are rejected") {
  CHECK_THROWS(generate_dataset(0, 1, 64, 0));
  CHECK_THROWS(generate_dataset(1, 0, 64, 0));
  CHECK_THROWS(generate_dataset(1, 1, 60, 0));
  CHECK_THROWS(generate_dataset(1, 1, 0, 0));
}

TEST_CASE("leave-one-attack-out: 4 splits, disjoint, held-out attack only in test") {
  const Dataset d = generate_dataset(16, 3, 32, 6);
  const auto splits = leave_one_attack_out(d);
  REQUIRE(splits.size() == 4);
  std::vector<std::uint64_t> lives;
  for (const Sample& s : d.samples)
    if (s.label == Label::live) lives.push_back(s.id);
  std::set<std::uint64_t> tested_lives;
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const ProtocolSplit& sp = splits[k];
    CHECK(sp.held_out == kAttackTypes[k]);
    CHECK(sp.name == "loo_" + std::string(attack_name(sp.held_out)));
    std::set<std::uint64_t> train(sp.train_ids.begin(), sp.train_ids.end());
    std::set<std::uint64_t> test(sp.test_ids.begin(), sp.test_ids.end());
    CHECK(train.size() == sp.train_ids.size());
    CHECK(train.size() + test.size() == d.samples.size());
    for (std::uint64_t id : test) CHECK(train.count(id) == 0);
    std::size_t test_live = 0, held = 0;
    for (std::uint64_t id : sp.train_ids) CHECK(d.by_id(id).attack != sp.held_out);
    for (std::uint64_t id : sp.test_ids) {
      const Sample& s = d.by_id(id);
      if (s.label == Label::live) {
        ++test_live;
        tested_lives.insert(id);
      } else {
        CHECK(s.attack == sp.held_out);
        ++held;
      }
    }
    CHECK(test_live == 4);
    CHECK(held == 3);
    // every live id lands in exactly one side of the split
    for (std::uint64_t id : lives) CHECK(train.count(id) + test.count(id) == 1);
  }
  CHECK(tested_lives.size() == 16);
}

TEST_CASE("leave-one-attack-out needs two attack types") {
  Dataset d = generate_dataset(4, 1, 16, 0);
  d.samples.erase(std::remove_if(d.samples.begin(), d.samples.end(),
                                 [](const Sample& s) { return s.is_spoof() && s.attack != kAttackTypes[0]; }),
                  d.samples.end());
  CHECK_THROWS(leave_one_attack_out(d));
}

TEST_CASE("save then load is the identity") {
  TempDir tmp("roundtrip");
  const Dataset d = generate_dataset(8, 2, 64, 7);
  save_dataset(d, tmp.path);
  CHECK(fs::exists(tmp.path / "manifest.csv"));
  CHECK(load_dataset(tmp.path) == d);
}

TEST_CASE("a flipped pixel byte is a checksum error naming the file") {
  TempDir tmp("corrupt");
  const Dataset d = generate_dataset(2, 1, 16, 8);
  save_dataset(d, tmp.path);
  const fs::path img = tmp.path / "000003.ppm";
  {
    std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-1, std::ios::end);
    char c;
    f.get(c);
    f.seekp(-1, std::ios::end);
    f.put(static_cast<char>(c ^ 1));
  }
  try {
    load_dataset(tmp.path);
    FAIL("expected a checksum error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    CHECK(std::string(e.what()).find("000003.ppm") != std::string::npos);
  }
}

TEST_CASE("manifest and file counts must match") {
  TempDir tmp("count");
  const Dataset d = generate_dataset(2, 1, 16, 8);
  save_dataset(d, tmp.path);
  fs::copy_file(tmp.path / "000000.ppm", tmp.path / "000099.ppm");
  CHECK_THROWS_AS(load_dataset(tmp.path), DatasetError);
  fs::remove(tmp.path / "000099.ppm");
  CHECK(load_dataset(tmp.path) == d);
  fs::remove(tmp.path / "000001_mask.pgm");
  CHECK_THROWS_AS(load_dataset(tmp.path), DatasetError);
}

TEST_CASE("missing directories and malformed manifests are errors") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/mtfas"), DatasetError);
  TempDir tmp("malformed");
  const Dataset d = generate_dataset(2, 1, 16, 8);
  save_dataset(d, tmp.path);
  std::ofstream(tmp.path / "manifest.csv") << "id,label\n0,live\n";
  CHECK_THROWS_AS(load_dataset(tmp.path), DatasetError);
}

TEST_CASE("PPM round trip is exact on k/255 values") {
  TempDir tmp("ppm");
  fs::create_directories(tmp.path);
  Tensor<double> img(Shape{3, 2, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i * 13) / 255.0;
  write_ppm(tmp.path / "a.ppm", img);
  CHECK(read_ppm(tmp.path / "a.ppm") == img);
}

}  // TEST_SUITE

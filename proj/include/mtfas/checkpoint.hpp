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
#include <utility>
#include <vector>

#include "mtfas/network.hpp"
#include "mtfas/sha256.hpp"
#include "mtfas/tensor.hpp"
#include "mtfas/weights.hpp"

namespace mtfas {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, format, checksum, fingerprint, precision, missing };
  CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// One named tensor of a checkpoint, values held in their stored precision.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  Precision precision = Precision::single;
  std::vector<std::uint8_t> raw;  // little-endian IEEE values
};

/// Layout on disk:
///   "MTFAS1" | 32-byte spec fingerprint | u32 entry count |
///   per entry: u32 name length, name, u32 rank, u64 dims[rank], u8 precision,
///              u64 value count, values (little-endian)
///   | SHA-256 of everything before it
/// Integers are little-endian.
struct Checkpoint {
  Digest fingerprint{};
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry& entry(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Adds one entry per parameter view, named "<bundle>/<view>".
template <typename T>
void add_bundle(Checkpoint& ckpt, const std::string& bundle, const WeightBundle<T>& weights);

/// Rebuilds a bundle from its entries, checking the fingerprint against
/// `spec` and the stored precision against T.
template <typename T>
WeightBundle<T> read_bundle(const Checkpoint& ckpt, const NetworkSpec& spec, const std::string& bundle);

/// Precision of the entries making up `bundle`.
Precision bundle_precision(const Checkpoint& ckpt, const std::string& bundle);

Checkpoint make_checkpoint(const NetworkSpec& spec);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Exclusive claim on an output directory through a ".lock" file holding the
/// owner's pid. A lock left by a process that no longer exists is taken over.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

class LockError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mtfas

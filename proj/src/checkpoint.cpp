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

#include "mtfas/checkpoint.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mtfas {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[] = {'M', 'T', 'F', 'A', 'S', '1'};
constexpr std::size_t kMagicSize = sizeof kMagic;

using Kind = CheckpointError::Kind;

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof v);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError(Kind::format, "checkpoint: unexpected end of data");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::size_t value_width(Precision p) { return p == Precision::single ? 4 : 8; }

}  // namespace

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw CheckpointError(Kind::missing, "checkpoint has no entry '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

Checkpoint make_checkpoint(const NetworkSpec& spec) {
  Checkpoint c;
  c.fingerprint = sha256(serialize_spec(spec));
  return c;
}

template <typename T>
void add_bundle(Checkpoint& ckpt, const std::string& bundle, const WeightBundle<T>& weights) {
  for (std::size_t i = 0; i < weights.layout().views().size(); ++i) {
    const ParamView& v = weights.layout().views()[i];
    CheckpointEntry e;
    e.name = bundle + "/" + v.name;
    e.shape = v.shape;
    e.precision = precision_of<T>();
    const auto span = weights.view(i);
    const auto* p = reinterpret_cast<const std::uint8_t*>(span.data());
    e.raw.assign(p, p + span.size_bytes());
    ckpt.entries.push_back(std::move(e));
  }
}

Precision bundle_precision(const Checkpoint& ckpt, const std::string& bundle) {
  const std::string prefix = bundle + "/";
  for (const auto& e : ckpt.entries) {
    if (e.name.starts_with(prefix)) return e.precision;
  }
  throw CheckpointError(Kind::missing, "checkpoint has no bundle '" + bundle + "'");
}

template <typename T>
WeightBundle<T> read_bundle(const Checkpoint& ckpt, const NetworkSpec& spec, const std::string& bundle) {
  if (ckpt.fingerprint != sha256(serialize_spec(spec))) {
    throw CheckpointError(Kind::fingerprint,
                          "checkpoint was written for a different network (fingerprint " +
                              to_hex(ckpt.fingerprint) + ", expected " + spec_fingerprint(spec) + ")");
  }
  WeightBundle<T> w(param_layout(spec));
  for (std::size_t i = 0; i < w.layout().views().size(); ++i) {
    const ParamView& v = w.layout().views()[i];
    const CheckpointEntry& e = ckpt.entry(bundle + "/" + v.name);
    if (e.precision != precision_of<T>()) {
      throw CheckpointError(Kind::precision, "entry '" + e.name + "' is stored in " +
                                                 std::string(precision_name(e.precision)) +
                                                 " precision");
    }
    if (e.shape != v.shape || e.raw.size() != v.size() * sizeof(T)) {
      throw CheckpointError(Kind::format, "entry '" + e.name + "' has shape " + shape_str(e.shape) +
                                              ", expected " + shape_str(v.shape));
    }
    std::memcpy(w.view(i).data(), e.raw.data(), e.raw.size());
  }
  w.flat().check_finite("checkpoint bundle " + bundle);
  return w;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicSize);
  out.insert(out.end(), ckpt.fingerprint.begin(), ckpt.fingerprint.end());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put<std::uint64_t>(out, d);
    put<std::uint8_t>(out, e.precision == Precision::single ? 0 : 1);
    put<std::uint64_t>(out, e.raw.size() / value_width(e.precision));
    out.insert(out.end(), e.raw.begin(), e.raw.end());
  }
  const Digest d = sha256(out);
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kDigest = std::tuple_size_v<Digest>;
  if (bytes.size() < kMagicSize + kDigest * 2 + 4) {
    throw CheckpointError(Kind::checksum, "checkpoint checksum mismatch: file is truncated");
  }
  if (!std::equal(kMagic, kMagic + kMagicSize, bytes.begin())) {
    throw CheckpointError(Kind::format, "not a checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - kDigest;
  const Digest stored = [&] {
    Digest d;
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(body), bytes.end(), d.begin());
    return d;
  }();
  if (sha256(std::span<const std::uint8_t>(bytes.data(), body)) != stored) {
    throw CheckpointError(Kind::checksum, "checkpoint checksum mismatch: file is corrupted or truncated");
  }

  Reader r(bytes, body);
  r.bytes(kMagicSize);
  Checkpoint c;
  const auto fp = r.bytes(kDigest);
  std::copy(fp.begin(), fp.end(), c.fingerprint.begin());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto name = r.bytes(r.get<std::uint32_t>());
    e.name.assign(name.begin(), name.end());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint64_t>());
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) throw CheckpointError(Kind::format, "entry '" + e.name + "': bad precision tag");
    e.precision = tag == 0 ? Precision::single : Precision::double_;
    const auto n = r.get<std::uint64_t>();
    if (n != shape_size(e.shape)) {
      throw CheckpointError(Kind::format, "entry '" + e.name + "': value count does not match shape");
    }
    e.raw = r.bytes(n * value_width(e.precision));
    c.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError(Kind::format, "checkpoint has trailing data");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

template void add_bundle<float>(Checkpoint&, const std::string&, const WeightBundle<float>&);
template void add_bundle<double>(Checkpoint&, const std::string&, const WeightBundle<double>&);
template WeightBundle<float> read_bundle<float>(const Checkpoint&, const NetworkSpec&, const std::string&);
template WeightBundle<double> read_bundle<double>(const Checkpoint&, const NetworkSpec&, const std::string&);

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw LockError("cannot create " + dir.string() + ": " + ec.message());
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) throw LockError("cannot write " + path_.string());
      return;
    }
    if (errno != EEXIST) throw LockError("cannot create " + path_.string() + ": " + std::strerror(errno));
    std::ifstream in(path_);
    long owner = 0;
    in >> owner;
    if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM)) {
      throw LockError(dir.string() + " is in use by process " + std::to_string(owner));
    }
    std::filesystem::remove(path_, ec);  // stale
  }
  throw LockError("cannot acquire " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace mtfas

// Copyright 2026 The pcnr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcnr/trainer.hpp"

namespace pcnr {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'N', 'R', 'C', 'K', 'P', 'T'};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(source_ + ": version " + std::to_string(version_) + ", offset " + std::to_string(pos_) +
                          ": " + what);
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated file (needs " + std::to_string(n) + " more bytes)");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t limit) {
    const std::uint64_t n = u64();
    if (n > limit) fail("string length " + std::to_string(n) + " is implausible");
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (double& d : v) d = f64();
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void set_version(std::uint32_t v) { version_ = v; }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
  std::uint32_t version_ = 0;
};

}  // namespace

std::string encode_checkpoint(const TrainSession& session) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(session.step);
  w.str(format_train_config(session.config));
  const auto params = session.model.parameters();
  w.u64(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i].tensor;
    w.str(params[i].name);
    w.u64(t.rank());
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.values()) w.f64(v);
    const bool has_state = i < session.adam.m.size();
    for (std::size_t k = 0; k < t.numel(); ++k) w.f64(has_state ? session.adam.m[i][k] : 0.0);
    for (std::size_t k = 0; k < t.numel(); ++k) w.f64(has_state ? session.adam.v[i][k] : 0.0);
  }
  w.u64(fnv1a(w.bytes()));
  return w.bytes();
}

void save_checkpoint(const TrainSession& session, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(session));
}

CheckpointData decode_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  r.need(sizeof kMagic);
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) r.fail("not a checkpoint (bad magic)");
  r.u64();  // magic
  CheckpointData d;
  d.version = r.u32();
  r.set_version(d.version);
  if (d.version != kCheckpointVersion) {
    r.fail("unsupported version (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  d.step = r.u64();
  d.config_text = r.str(1 << 20);
  const std::uint64_t count = r.u64();
  if (count > 100000) r.fail("implausible parameter count " + std::to_string(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointData::Entry e;
    e.name = r.str(4096);
    const std::uint64_t rank = r.u64();
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank) + " for '" + e.name + "'");
    std::size_t n = 1;
    for (std::uint64_t k = 0; k < rank; ++k) {
      const std::uint64_t dim = r.u64();
      if (dim > (std::uint64_t{1} << 32) || n * dim > r.remaining()) r.fail("implausible shape for '" + e.name + "'");
      e.shape.push_back(dim);
      n *= dim;
    }
    e.values = r.doubles(n);
    e.m = r.doubles(n);
    e.v = r.doubles(n);
    d.entries.push_back(std::move(e));
  }
  const std::size_t body = r.pos();
  const std::uint64_t hash = r.u64();
  if (hash != fnv1a(std::string_view(bytes).substr(0, body))) r.fail("checksum mismatch (corrupt file)");
  if (r.remaining() != 0) r.fail("trailing bytes after the checksum");
  return d;
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

TrainSession load_session(const std::filesystem::path& checkpoint, Dataset dataset) {
  const CheckpointData d = read_checkpoint(checkpoint);
  TrainConfig config;
  try {
    config = parse_train_config(d.config_text, checkpoint.string() + " (stored config)");
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  TrainSession session(std::move(dataset), config);
  const auto params = session.model.parameters();
  if (params.size() != d.entries.size()) {
    throw CheckpointError(checkpoint.string() + ": holds " + std::to_string(d.entries.size()) +
                          " parameters, the model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != d.entries[i].name || params[i].tensor.shape() != d.entries[i].shape) {
      throw CheckpointError(checkpoint.string() + ": parameter " + std::to_string(i) + " is '" + d.entries[i].name +
                            "' " + shape_str(d.entries[i].shape) + ", expected '" + params[i].name + "' " +
                            shape_str(params[i].tensor.shape()));
    }
  }
  session.adam.m.clear();
  session.adam.v.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(d.entries[i].values.begin(), d.entries[i].values.end(), t.mutable_values().begin());
    session.adam.m.push_back(d.entries[i].m);
    session.adam.v.push_back(d.entries[i].v);
  }
  session.adam.step = d.step;
  session.step = d.step;
  return session;
}

}  // namespace pcnr

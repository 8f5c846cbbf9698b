#pragma once

/// Binary checkpoints. Layout, all little-endian:
///   "NSDACKPT" | u32 version | u32 has_phi
///   i64 n | f64 L | f64 nu | f64 t | f64 dt | i64 step
///   u64 seed | i64 band_lo | i64 band_hi | f64 grashof | u64 config hash
///   psi coefficients, then phi if present: n x (n/2 + 1) (re, im) f64 pairs, row-major.

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nudge2d/config.hpp"
#include "nudge2d/spectral.hpp"

namespace nudge2d {

inline constexpr char checkpoint_magic[8] = {'N', 'S', 'D', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  int n = 0;
  double length = 0.0;
  double nu = 0.0;
  double t = 0.0;
  double dt = 0.0;
  long long step = 0;
  std::uint64_t seed = 0;
  int band_lo = 0;
  int band_hi = 0;
  double grashof = 0.0;
  std::uint64_t config_hash = 0;
  std::optional<StreamField> psi;
  std::optional<StreamField> phi;
};

inline Checkpoint make_checkpoint(const RunConfig& cfg, double t, long long step, const StreamField& psi,
                                  const StreamField* phi = nullptr) {
  Checkpoint c;
  c.n = cfg.n;
  c.length = cfg.length;
  c.nu = cfg.nu;
  c.t = t;
  c.dt = cfg.dt;
  c.step = step;
  c.seed = cfg.seed;
  c.band_lo = cfg.band_lo;
  c.band_hi = cfg.band_hi;
  c.grashof = cfg.grashof;
  c.config_hash = cfg.hash();
  c.psi = psi;
  if (phi) c.phi = *phi;
  return c;
}

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + len);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void i64(long long v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> data) : buf_(std::move(data)) {}
  void raw(void* p, std::size_t len) {
    need(len);
    std::memcpy(p, buf_.data() + pos_, len);
    pos_ += len;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  long long i64() { return static_cast<long long>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t len) const {
    if (buf_.size() - pos_ < len) throw CheckpointError("checkpoint is truncated");
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

inline void write_field(ByteWriter& w, const StreamField& f) {
  for (const complex& c : f.coeffs()) {
    w.f64(c.real());
    w.f64(c.imag());
  }
}

inline StreamField read_field(ByteReader& r, const GridPtr& grid) {
  StreamField f(grid);
  for (complex& c : f.coeffs()) {
    const double re = r.f64();
    c = complex(re, r.f64());
  }
  const auto mask = grid->dealias_mask();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i] && f[i] != complex{}) throw CheckpointError("checkpoint field has energy outside the retained modes");
  return f;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const Checkpoint& c) {
  if (!c.psi) throw CheckpointError("checkpoint has no reference field");
  detail::ByteWriter w;
  w.raw(checkpoint_magic, sizeof checkpoint_magic);
  w.u32(checkpoint_version);
  w.u32(c.phi ? 1u : 0u);
  w.i64(c.n);
  w.f64(c.length);
  w.f64(c.nu);
  w.f64(c.t);
  w.f64(c.dt);
  w.i64(c.step);
  w.u64(c.seed);
  w.i64(c.band_lo);
  w.i64(c.band_hi);
  w.f64(c.grashof);
  w.u64(c.config_hash);
  detail::write_field(w, *c.psi);
  if (c.phi) detail::write_field(w, *c.phi);
  return w.bytes();
}

/// Parses a checkpoint; `grid` is reused when it matches the stored n and L.
inline Checkpoint deserialize_checkpoint(std::vector<unsigned char> bytes, GridPtr grid = nullptr) {
  detail::ByteReader r(std::move(bytes));
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, checkpoint_magic, sizeof magic) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != checkpoint_version)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(checkpoint_version) + ")");
  const std::uint32_t has_phi = r.u32();
  if (has_phi > 1) throw CheckpointError("corrupt checkpoint header");
  Checkpoint c;
  c.n = static_cast<int>(r.i64());
  c.length = r.f64();
  c.nu = r.f64();
  c.t = r.f64();
  c.dt = r.f64();
  c.step = r.i64();
  c.seed = r.u64();
  c.band_lo = static_cast<int>(r.i64());
  c.band_hi = static_cast<int>(r.i64());
  c.grashof = r.f64();
  c.config_hash = r.u64();
  if (c.n < 8 || c.n > (1 << 16) || (c.n & (c.n - 1)) != 0) throw CheckpointError("corrupt checkpoint header");
  if (!grid || grid->n() != c.n || grid->length() != c.length) grid = make_grid(c.n, c.length);
  c.psi = detail::read_field(r, grid);
  if (has_phi) c.phi = detail::read_field(r, grid);
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint data");
  return c;
}

inline void write_checkpoint(const Checkpoint& c, const std::string& path) {
  const auto bytes = serialize_checkpoint(c);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path, GridPtr grid = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(bytes), std::move(grid));
}

/// Compares the checkpoint against a config. A differing config hash is
/// reported through `warn`; it is fatal unless `allow_mismatch` is set.
/// Grid size and box length must always agree.
inline void check_checkpoint(const Checkpoint& c, const RunConfig& cfg, bool allow_mismatch,
                             const std::function<void(const std::string&)>& warn = {}) {
  if (c.n != cfg.n || c.length != cfg.length)
    throw CheckpointError("checkpoint grid (n=" + std::to_string(c.n) + ") does not match the config (n=" +
                          std::to_string(cfg.n) + ")");
  if (c.config_hash == cfg.hash()) return;
  const std::string msg = "checkpoint was written under a different configuration (hash mismatch)";
  if (warn) warn(msg);
  if (!allow_mismatch) throw CheckpointError(msg + "; pass the override flag to use it anyway");
}

}  // namespace nudge2d

#pragma once

// Environment files.
//
// Binary layout (all integers and floats little-endian):
//   "RWRE"                 4 bytes magic
//   version                u16 (currently 1)
//   d                      u8
//   box                    d x (i64 min, i64 max)
//   law_id                 u16 length + UTF-8 bytes
//   seed                   u64
//   kernels                volume x 2d f64, row-major over the box
//   crc                    u64, CRC-64/XZ of every preceding byte
//
// The JSON twin carries the same fields with probabilities written as
// round-trippable decimal strings.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <boost/crc.hpp>

#include "json.hpp"
#include "rwre/environment.hpp"

namespace rwre {

inline constexpr std::uint16_t kEnvFormatVersion = 1;

using Crc64 = boost::crc_optimal<64, 0x42F0E1EBA9EA3693ull, 0xFFFFFFFFFFFFFFFFull, 0xFFFFFFFFFFFFFFFFull, true, true>;

inline std::uint64_t crc64(const std::uint8_t* data, std::size_t n) {
  Crc64 crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t n) : p_(data), n_(n) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw FormatError("environment file truncated at byte " + std::to_string(pos_));
  }
  std::uint64_t get(int k) {
    need(static_cast<std::size_t>(k));
    std::uint64_t v = 0;
    for (int i = 0; i < k; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(k);
    return v;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const Environment& env) {
  const int d = env.dim();
  const Box& box = env.box();
  require(env.law_id().size() <= 0xFFFF, "law id too long");
  detail::ByteWriter w;
  w.bytes("RWRE", 4);
  w.u16(kEnvFormatVersion);
  w.u8(static_cast<std::uint8_t>(d));
  for (int i = 0; i < d; ++i) {
    w.i64(box.lo()[i]);
    w.i64(box.hi()[i]);
  }
  w.u16(static_cast<std::uint16_t>(env.law_id().size()));
  w.bytes(env.law_id().data(), env.law_id().size());
  w.u64(env.seed());
  for (std::int64_t i = 0; i < box.volume(); ++i) {
    const SiteKernel k = env.kernel_at(i);
    for (int j = 0; j < 2 * d; ++j) w.f64(k[j]);
  }
  auto& buf = w.buffer();
  const std::uint64_t crc = crc64(buf.data(), buf.size());
  w.u64(crc);
  return std::move(buf);
}

inline Environment deserialize(const std::uint8_t* data, std::size_t n) {
  detail::ByteReader r(data, n);
  if (r.str(4) != "RWRE") throw FormatError("bad magic: not an environment file");
  const auto version = r.u16();
  if (version != kEnvFormatVersion) throw FormatError("unsupported environment format version " + std::to_string(version));
  const int d = r.u8();
  if (d < 1 || d > kMaxDim) throw FormatError("malformed header: dimension " + std::to_string(d));
  Site lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = r.i64();
    hi[i] = r.i64();
    if (lo[i] > hi[i]) throw FormatError("malformed header: empty box on axis " + std::to_string(i));
  }
  const Box box(lo, hi);
  const std::string law_id = r.str(r.u16());
  const std::uint64_t seed = r.u64();
  const auto count = static_cast<std::size_t>(box.volume() * 2 * d);
  if (r.remaining() != count * 8 + 8) throw FormatError("malformed file: kernel array length does not match the box");
  std::vector<double> probs(count);
  for (auto& p : probs) p = r.f64();
  const std::size_t body = r.position();
  const std::uint64_t stored = r.u64();
  for (std::int64_t i = 0; i < box.volume(); ++i) {
    const SiteKernel k(d, std::span<const double>(probs.data() + i * 2 * d, 2 * d));
    if (!k.valid()) throw FormatError("kernel-sum violation at site " + box.site_at(i).str());
  }
  if (crc64(data, body) != stored) throw FormatError("checksum mismatch");
  return Environment::from_kernels(box, law_id, seed, std::move(probs));
}

inline Environment deserialize(const std::vector<std::uint8_t>& bytes) { return deserialize(bytes.data(), bytes.size()); }

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json to_json(const Environment& env) {
  const int d = env.dim();
  nlohmann::json j;
  j["format"] = "rwre-env";
  j["version"] = kEnvFormatVersion;
  j["d"] = d;
  std::vector<std::int64_t> lo, hi;
  for (int i = 0; i < d; ++i) {
    lo.push_back(env.box().lo()[i]);
    hi.push_back(env.box().hi()[i]);
  }
  j["box"] = {{"min", lo}, {"max", hi}};
  j["law_id"] = env.law_id();
  j["seed"] = env.seed();
  auto rows = nlohmann::json::array();
  for (std::int64_t i = 0; i < env.box().volume(); ++i) {
    const SiteKernel k = env.kernel_at(i);
    auto row = nlohmann::json::array();
    for (int jx = 0; jx < 2 * d; ++jx) row.push_back(format_double(k[jx]));
    rows.push_back(std::move(row));
  }
  j["kernels"] = std::move(rows);
  return j;
}

inline Environment environment_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "rwre-env") throw FormatError("not an rwre-env document");
    if (j.at("version").get<int>() != kEnvFormatVersion) throw FormatError("unsupported JSON environment version");
    const int d = j.at("d").get<int>();
    if (d < 1 || d > kMaxDim) throw FormatError("dimension out of range");
    const auto lo_v = j.at("box").at("min").get<std::vector<std::int64_t>>();
    const auto hi_v = j.at("box").at("max").get<std::vector<std::int64_t>>();
    if (static_cast<int>(lo_v.size()) != d || static_cast<int>(hi_v.size()) != d) throw FormatError("box rank mismatch");
    Site lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
      lo[i] = lo_v[i];
      hi[i] = hi_v[i];
    }
    const Box box(lo, hi);
    const auto& rows = j.at("kernels");
    if (static_cast<std::int64_t>(rows.size()) != box.volume()) throw FormatError("kernel row count does not match the box");
    std::vector<double> probs;
    probs.reserve(static_cast<std::size_t>(box.volume() * 2 * d));
    for (std::int64_t i = 0; i < box.volume(); ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      if (static_cast<int>(row.size()) != 2 * d) throw FormatError("kernel row width mismatch at site " + box.site_at(i).str());
      for (const auto& cell : row) probs.push_back(std::stod(cell.get<std::string>()));
      const SiteKernel k(d, std::span<const double>(probs.data() + i * 2 * d, 2 * d));
      if (!k.valid()) throw FormatError("kernel-sum violation at site " + box.site_at(i).str());
    }
    return Environment::from_kernels(box, j.at("law_id").get<std::string>(), j.at("seed").get<std::uint64_t>(),
                                     std::move(probs));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON environment: ") + e.what());
  }
}

}  // namespace rwre

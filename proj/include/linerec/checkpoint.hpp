#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "linerec/graph.hpp"

// Binary serialization with explicit little-endian byte order, independent of
// host endianness. Checkpoints refuse to load entries the model does not have
// (by name and shape); they may omit parameters, which then keep their
// in-memory values.

namespace linerec {

struct ByteWriter {
  std::string buf;

  void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    buf.append(s);
  }
  void magic(const char m[5]) { buf.append(m, 4); }

  void to_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("short write: " + path);
  }
};

struct ByteReader {
  std::string buf;
  size_t pos = 0;

  explicit ByteReader(std::string data) : buf(std::move(data)) {}

  static ByteReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data));
  }

  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated stream");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf[pos++]);
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  void expect_magic(const char m[5]) {
    need(4);
    if (buf.compare(pos, 4, m, 4) != 0)
      throw std::runtime_error("bad magic: expected " + std::string(m, 4));
    pos += 4;
  }
  bool at_end() const { return pos == buf.size(); }
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Writes registered parameters in registration order plus a caller metadata
// string (architecture fingerprint, training config, ...). A non-empty
// skip_prefix drops matching parameters, e.g. to strip a train-only branch.
inline void save_params(const Graph& g, const std::string& meta, const std::string& path,
                        const std::string& skip_prefix = "") {
  std::vector<size_t> keep;
  for (size_t i = 0; i < g.n_params(); ++i)
    if (skip_prefix.empty() || g.param_names()[i].rfind(skip_prefix, 0) != 0) keep.push_back(i);
  ByteWriter w;
  w.magic("LRMC");
  w.u32(kCheckpointVersion);
  w.str(meta);
  w.u32(static_cast<uint32_t>(keep.size()));
  for (size_t i : keep) {
    const Tensor& t = g.param_at(i);
    w.str(g.param_names()[i]);
    w.u32(static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) w.i32(d);
    for (double v : t.v) w.f64(v);
  }
  w.to_file(path);
}

// Loads into an already-constructed graph. Every stored entry must name a
// registered parameter with a matching shape; parameters absent from the file
// keep their current values (stripped branches). Returns the metadata string.
inline std::string load_params(Graph& g, const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("LRMC");
  const uint32_t ver = r.u32();
  if (ver != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(ver));
  std::string meta = r.str();
  const uint32_t n = r.u32();
  if (n > g.n_params())
    throw std::runtime_error("checkpoint has " + std::to_string(n) + " parameters, model has " +
                             std::to_string(g.n_params()));
  std::set<std::string> seen;
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = r.str();
    if (!seen.insert(name).second)
      throw std::runtime_error("checkpoint repeats parameter " + name);
    const Value pv = [&] {
      try {
        return g.param_value(name);
      } catch (const std::invalid_argument&) {
        throw std::runtime_error("checkpoint parameter " + name + " is not in the model");
      }
    }();
    const uint32_t nd = r.u32();
    std::vector<int> shape(nd);
    for (uint32_t k = 0; k < nd; ++k) shape[k] = r.i32();
    Tensor& t = g.tensor(pv);
    if (shape != t.shape)
      throw std::runtime_error("checkpoint parameter " + name + " has shape " +
                               Tensor::shape_str(shape) + " but model expects " +
                               Tensor::shape_str(t.shape));
    for (double& v : t.v) v = r.f64();
  }
  return meta;
}

}  // namespace linerec

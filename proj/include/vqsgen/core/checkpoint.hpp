#pragma once

// Binary container of named f64 arrays.
//
// Layout (little-endian):
//   "VQSGCKPT"                              8-byte magic
//   u32 version                             currently 1
//   u32 len, bytes                          manifest text, "key=value\n" lines
//   u32 count                               number of arrays
//   count x { u32 len, name bytes, u32 ndim, u64 dims[ndim], f64 data[prod(dims)] }
//   u64 checksum                            FNV-1a over every preceding byte
//
// Arrays keep insertion order, so load -> save reproduces the file byte for byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsgen/core/params.hpp"
#include "vqsgen/core/tensor.hpp"

namespace vqsgen {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::map<std::string, std::string> manifest;
  std::vector<NamedArray> arrays;

  std::string config_hash() const {
    auto it = manifest.find("config_hash");
    return it == manifest.end() ? std::string() : it->second;
  }

  void put(const std::string& name, const Var& v) { arrays.push_back({name, v.shape(), v.vec()}); }

  void put_all(const ParamSet& ps, const std::string& prefix = "") {
    for (const auto& [n, v] : ps.items()) put(prefix + n, v);
  }

  const NamedArray& get(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw CheckpointError("checkpoint has no array named '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }

  /// Copies stored values into already-shaped parameters (names prefixed).
  void restore(ParamSet& ps, const std::string& prefix = "") const {
    for (const auto& [n, v] : ps.items()) {
      const NamedArray& a = get(prefix + n);
      if (a.shape != v.shape())
        throw CheckpointError("checkpoint array '" + a.name + "' has shape " + shape_str(a.shape) + ", model expects " +
                              shape_str(v.shape()));
      Var dst = v;
      std::copy(a.data.begin(), a.data.end(), dst.mutable_values().begin());
    }
  }

  std::string serialize() const {
    std::string out;
    auto raw = [&out](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
    auto u32 = [&raw](std::uint32_t x) { raw(&x, 4); };
    auto u64 = [&raw](std::uint64_t x) { raw(&x, 8); };
    raw("VQSGCKPT", 8);
    u32(kVersion);
    std::string text;
    for (const auto& [k, v] : manifest) text += k + "=" + v + "\n";
    u32(static_cast<std::uint32_t>(text.size()));
    raw(text.data(), text.size());
    u32(static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
      if (numel(a.shape) != a.data.size()) throw CheckpointError("array '" + a.name + "' data does not match its shape");
      u32(static_cast<std::uint32_t>(a.name.size()));
      raw(a.name.data(), a.name.size());
      u32(static_cast<std::uint32_t>(a.shape.size()));
      for (auto d : a.shape) u64(d);
      raw(a.data.data(), a.data.size() * sizeof(double));
    }
    u64(fnv1a(out.data(), out.size()));
    return out;
  }

  static Checkpoint parse(const std::string& bytes) {
    std::size_t off = 0;
    auto fail = [&off](const std::string& what) -> CheckpointError {
      return CheckpointError("corrupt checkpoint at offset " + std::to_string(off) + ": " + what);
    };
    auto take = [&](void* dst, std::size_t n) {
      if (off + n > bytes.size()) throw fail("unexpected end of data");
      std::memcpy(dst, bytes.data() + off, n);
      off += n;
    };
    auto u32 = [&]() { std::uint32_t x; take(&x, 4); return x; };
    auto u64 = [&]() { std::uint64_t x; take(&x, 8); return x; };

    char magic[8];
    take(magic, 8);
    if (std::memcmp(magic, "VQSGCKPT", 8) != 0) {
      off = 0;
      throw fail("bad magic");
    }
    if (bytes.size() < 8 + 8) throw fail("too short");
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, 8);
    if (stored != fnv1a(bytes.data(), body)) {
      off = body;
      throw fail("checksum mismatch");
    }
    const std::uint32_t ver = u32();
    if (ver != kVersion) throw fail("unsupported version " + std::to_string(ver));

    Checkpoint ck;
    std::string text(u32(), '\0');
    take(text.data(), text.size());
    std::istringstream ts(text);
    for (std::string line; std::getline(ts, line);) {
      auto eq = line.find('=');
      if (eq == std::string::npos) throw fail("malformed manifest line");
      ck.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const std::uint32_t count = u32();
    for (std::uint32_t k = 0; k < count; ++k) {
      NamedArray a;
      a.name.resize(u32());
      take(a.name.data(), a.name.size());
      const std::uint32_t nd = u32();
      if (nd > 8) throw fail("implausible rank " + std::to_string(nd));
      for (std::uint32_t d = 0; d < nd; ++d) a.shape.push_back(u64());
      const std::size_t n = numel(a.shape);
      if (n > (body - off) / sizeof(double)) throw fail("array '" + a.name + "' extends past end of data");
      a.data.resize(n);
      take(a.data.data(), n * sizeof(double));
      ck.arrays.push_back(std::move(a));
    }
    if (off != body) throw fail("trailing bytes before checksum");
    return ck;
  }

  void save(const std::string& path) const {
    const std::string bytes = serialize();
    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw CheckpointError("cannot write " + tmp);
      f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!f) throw CheckpointError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move " + tmp + " to " + path);

    std::ofstream m(path + ".txt", std::ios::trunc);
    m << "format=vqsgen-checkpoint\nversion=" << kVersion << "\n";
    for (const auto& [k, v] : manifest) m << k << "=" << v << "\n";
    for (const auto& a : arrays) m << "array " << a.name << " " << shape_str(a.shape) << "\n";
  }

  /// Loads a container; refuses a differing config hash unless `force`.
  static Checkpoint load(const std::string& path, const std::string& expected_hash = "", bool force = false) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    Checkpoint ck = parse(ss.str());
    if (!expected_hash.empty() && !force && ck.config_hash() != expected_hash)
      throw ConfigMismatchError("checkpoint " + path + " was written for config " + ck.config_hash() + ", expected " +
                                expected_hash);
    return ck;
  }
};

}  // namespace vqsgen

#pragma once
// Shared plumbing: error types, deterministic RNG streams, little-endian
// codecs, small file helpers.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace firecast {

// Exit-code mapping at the CLI: UsageError -> 1, DataError -> 2, NumericError -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. std::mt19937_64 is bit-exact across platforms; the
// standard <random> distributions are not, so the few we need live here.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(splitmix64(seed)) {}

  // Independent substream derived from (seed, salts...). Adding a salt level
  // never perturbs sibling streams.
  static Rng stream(uint64_t seed, uint64_t a) { return Rng(seed ^ splitmix64(a ^ 0x51ed2700u)); }
  static Rng stream(uint64_t seed, uint64_t a, uint64_t b) {
    return Rng(seed ^ splitmix64(a ^ splitmix64(b ^ 0x9a3c11beu)));
  }

  uint64_t next() { return eng_(); }

  // [0, 1)
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  bool bernoulli(double p) { return uniform01() < p; }
  uint64_t below(uint64_t n) { return n == 0 ? 0 : eng_() % n; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<size_t>(below(i))]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

// ---- little-endian scalar codecs (byte-by-byte, endian-agnostic) ----

inline void store_u32_le(uint8_t* p, uint32_t v) {
  p[0] = static_cast<uint8_t>(v & 0xff);
  p[1] = static_cast<uint8_t>((v >> 8) & 0xff);
  p[2] = static_cast<uint8_t>((v >> 16) & 0xff);
  p[3] = static_cast<uint8_t>((v >> 24) & 0xff);
}
inline uint32_t load_u32_le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline void store_u64_le(uint8_t* p, uint64_t v) {
  store_u32_le(p, static_cast<uint32_t>(v & 0xffffffffull));
  store_u32_le(p + 4, static_cast<uint32_t>(v >> 32));
}
inline uint64_t load_u64_le(const uint8_t* p) {
  return static_cast<uint64_t>(load_u32_le(p)) | (static_cast<uint64_t>(load_u32_le(p + 4)) << 32);
}
inline void store_f32_le(uint8_t* p, float v) { store_u32_le(p, std::bit_cast<uint32_t>(v)); }
inline float load_f32_le(const uint8_t* p) { return std::bit_cast<float>(load_u32_le(p)); }
inline void store_f64_le(uint8_t* p, double v) { store_u64_le(p, std::bit_cast<uint64_t>(v)); }
inline double load_f64_le(const uint8_t* p) { return std::bit_cast<double>(load_u64_le(p)); }

// ---- file helpers ----

inline void write_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("read failed: " + path.string());
  return bytes;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

// Shortest-round-trip-ish decimal formatting; stable across runs.
inline std::string fmt_g17(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace firecast

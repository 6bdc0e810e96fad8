#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lrxf::rng {

// 64-bit FNV-1a, used for stream naming and content hashing.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based splittable generator. A Stream is a pure function of its
// key; values are produced by mixing the key with a per-call counter, so
// draws are reproducible regardless of thread scheduling. Named sub-streams
// come from split().
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  static Stream root(std::uint64_t seed) { return Stream(splitmix64(seed)); }

  Stream split(std::string_view name) const {
    return Stream(splitmix64(key_ ^ fnv1a(name)));
  }
  Stream split(std::uint64_t index) const {
    return Stream(splitmix64(key_ ^ (0x9e3779b97f4a7c15ULL * (index + 1))));
  }

  std::uint64_t next_u64() { return splitmix64(key_ ^ counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Standard normal via Box-Muller; one value per call, no caching so the
  // draw count stays a pure function of call count.
  double next_normal() {
    double u1 = next_unit();
    double u2 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace lrxf::rng

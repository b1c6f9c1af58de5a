#pragma once

// Portable random streams. Standard-library distributions are
// implementation-defined, so the few transforms needed here are spelled out
// to keep outputs identical across toolchains.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace stratscope {

// SplitMix64; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Seed for an independent stream keyed by an ordered list of parts.
template <class... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t master, Parts... parts) {
  std::uint64_t h = mix64(master ^ 0x6A09E667F3BCC909ull);
  ((h = mix64(h ^ (static_cast<std::uint64_t>(parts) + 0x9E3779B97F4A7C15ull))), ...);
  return h;
}

// [0, 1) with 53 random bits.
template <class Gen>
double uniform01(Gen& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n), n > 0.
template <class Gen>
std::uint64_t uniform_below(Gen& g, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do x = g();
  while (x >= limit);
  return x % n;
}

template <class Gen>
double standard_normal(Gen& g) {
  // Box-Muller, one variate per call.
  double u1 = 1.0 - uniform01(g);  // (0, 1]
  double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <class Gen>
double exponential(Gen& g, double rate) {
  return -std::log(1.0 - uniform01(g)) / rate;
}

}  // namespace stratscope

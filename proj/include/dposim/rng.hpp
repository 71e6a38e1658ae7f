#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dposim {

/// Deterministic random stream. Every run derives all of its randomness from
/// one root seed through named substreams, so a single seed reproduces an
/// entire experiment. Uniform and normal draws use a fixed bit path on top of
/// std::mt19937_64 (std distributions vary across standard libraries, which
/// would break byte-identical output files).
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : gen_(mix(state)) {}

  /// Derives the stream for (seed, name, index). Distinct names or indices
  /// give statistically independent streams.
  static RngStream substream(std::uint64_t seed, std::string_view name,
                             std::uint64_t index = 0) {
    std::uint64_t h = fnv1a(name);
    return RngStream(mix(seed) ^ mix(h + 0x9e3779b97f4a7c15ULL * (index + 1)));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double next_open_double() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double next_normal(double mean = 0.0, double sd = 1.0) {
    double u1 = next_open_double();
    double u2 = next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + sd * z;
  }

  /// Unbiased uniform index in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n) {
    std::uint64_t span = static_cast<std::uint64_t>(n);
    std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % span);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::mt19937_64 gen_;
};

}  // namespace dposim

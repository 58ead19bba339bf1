#pragma once

// Counter-based SplitMix64 stream. The value at position k depends only on
// (seed, k), so a chunk of trials can be regenerated anywhere from its
// derived sub-seed. Samplers below are written out here rather than taken
// from <random> because libstdc++/libc++ distributions differ bitwise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace dlab {

inline constexpr const char* kRngId = "splitmix64/v1";

inline constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Sub-seed for chunk c of a run with the given master seed.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t chunk) {
  return splitmix_mix(master ^ splitmix_mix(chunk + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next() {
    ++counter_;
    return splitmix_mix(seed_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// [0, 1)
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// (0, 1), never hits an endpoint
  double uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  /// (-1, 1)
  double uniform_sym() { return 2.0 * uniform_open() - 1.0; }

  /// Unbiased integer in [0, bound), Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool coin() { return (next() >> 63) != 0; }
  double rademacher() { return coin() ? 1.0 : -1.0; }

  /// Box-Muller, one output per pair of uniforms.
  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double cauchy() { return std::tan(std::numbers::pi * (uniform_open() - 0.5)); }

  template <typename T>
  void shuffle(std::span<T> xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(xs[i - 1], xs[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace dlab

#pragma once

#include <cmath>
#include <cstdint>

// Counter-based random number generation. Every variate is a pure function of
// (seed, stream, counter), so parallel loops draw independently of thread
// count and adding paths never shifts the draws of existing ones.

namespace sock::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h = splitmix64(s);
  s ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return splitmix64(s);
}

/// Sequential stream of variates; deterministic for a given seed.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform on (0, 1); never returns 0.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

 private:
  std::uint64_t state_;
};

/// One uniform on (0,1) keyed by (seed, stream, counter).
inline double uniform_at(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t counter) {
  return (static_cast<double>(mix(seed, stream, counter) >> 11) + 0.5) *
         0x1.0p-53;
}

/// One standard normal keyed by (seed, stream, counter).
inline double normal_at(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t counter) {
  std::uint64_t s = mix(seed, stream, counter);
  const double u1 = (static_cast<double>(splitmix64(s) >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = (static_cast<double>(splitmix64(s) >> 11) + 0.5) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace sock::rng

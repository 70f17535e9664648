#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ciopt {

// Deterministic PRNG (splitmix64). std::mt19937 + <random> distributions are
// implementation-defined across standard libraries; replay reports must be
// reproducible bit-for-bit, so all randomness in the project flows through
// this generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). n must be > 0.
  std::size_t next_index(std::size_t n) {
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool next_bool(double p) { return next_double() < p; }

  // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  // so the consumed stream length is independent of call history.
  double next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643 * u2);
  }

  double next_gaussian(double mean, double stddev) {
    return mean + stddev * next_gaussian();
  }

 private:
  std::uint64_t state_;
};

// Labeled sub-seed derivation: every component that needs randomness gets a
// seed derived from the master seed, a role label, and a counter. Documented
// so runs are reproducible across platforms.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                                 std::uint64_t counter = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  h ^= master + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= counter * 0xd1342543de82ef95ULL;
  Rng mix(h);
  return mix.next_u64();
}

}  // namespace ciopt

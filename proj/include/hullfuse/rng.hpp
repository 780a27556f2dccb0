#pragma once

#include <cmath>
#include <cstdint>

namespace hullfuse {

/// Deterministic counter-based RNG. Unlike the std distributions, the
/// sequences produced here are identical on every platform and can be
/// re-seeded per work item, so parallel generation stays reproducible.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {
    // splitmix64 warm-up decorrelates small seeds
    next_u64();
    next_u64();
  }

  /// Independent stream for item `index` of a seeded collection.
  static Rng for_item(uint64_t seed, uint64_t index) {
    return Rng(seed ^ (0x9e3779b97f4a7c15ull * (index + 1)));
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }

  /// Standard normal via Box-Muller (no cached spare; keeps state minimal).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace hullfuse

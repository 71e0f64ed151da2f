#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "cortex/constants.hpp"
#include "cortex/types.hpp"

namespace cortex {

// Deterministic random draws. std::mt19937_64 is bit-exact across platforms,
// but the standard distributions are not, so uniform and normal variates are
// generated here explicitly (53-bit uniforms, Box-Muller normals).

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Stable combination of a master seed with a stream index (trial number,
/// segment counter, ...) so that independent streams never overlap.
inline uint64_t mix_seed(uint64_t master, uint64_t index) {
  uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (index + 1));
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log() finite
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * kPi * u2);
  }

  Vec3 normal3() {
    Vec3 out;
    out << normal(), normal(), normal();
    return out;
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cortex

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "tracenav/geometry.hpp"

namespace tracenav {

// Independent random streams, one per simulated quantity, so changing how
// many draws one purpose consumes never shifts another.
enum class RngStream : std::uint64_t {
  Pose = 1,
  Landmarks = 2,
  TraceNoise = 3,
  Liftoff = 4,
  Insertion = 5,
  Timing = 6,
  Surface = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// 64-bit Mersenne Twister (std::mt19937_64, whose output sequence is fixed by
// the standard) seeded with splitmix64(seed, stream). Uniform and normal
// variates are derived here rather than through <random> distributions,
// whose algorithms are implementation-defined.
class Rng {
 public:
  Rng(std::uint64_t seed, RngStream stream)
      : engine_(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)))) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one variate per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  double normal(double sigma) { return sigma * normal(); }

  Vector3 normal3(double sigma) {
    const double x = normal(sigma);
    const double y = normal(sigma);
    const double z = normal(sigma);
    return {x, y, z};
  }

  UnitVector3 unit_vector() {
    for (;;) {
      const Vector3 v = normal3(1.0);
      if (v.norm() > 1e-6) return UnitVector3(v);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tracenav

// mbslam - deterministic random number generation
// SPDX-License-Identifier: MIT
//
// All stochastic code in the library draws from this wrapper so that a seed
// fully determines the output bytes. Gaussian samples use an explicit
// Box-Muller transform instead of std::normal_distribution, whose sequence is
// implementation defined.

#ifndef MBSLAM_CORE_RNG_HPP
#define MBSLAM_CORE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace mbslam {

/// Mixes a master seed with a stream id so that independent noise streams can
/// be re-seeded without touching each other.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 1e-300);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  double gaussian(double sigma) { return sigma * gaussian(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mbslam

#endif  // MBSLAM_CORE_RNG_HPP

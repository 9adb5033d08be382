#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dpw {

// splitmix64; used to derive independent per-item seeds from a run seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0,1) from the top 53 bits; identical across platforms.
inline double uniform01(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

// Exact Gaussian draws via Box-Muller on a dedicated engine. Tracks how many
// variates have been handed out so stream positions can be audited.
class GaussianStream {
 public:
  explicit GaussianStream(uint64_t seed) : rng_(seed) {}

  double next() {
    ++draws_;
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(rng_);
    while (u1 <= 0.0) u1 = uniform01(rng_);
    const double u2 = uniform01(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t draws() const { return draws_; }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
  uint64_t draws_ = 0;
};

}  // namespace dpw

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rdm {

// splitmix64 finalizer; used to derive independent stream seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

// Deterministic RNG wrapper. std::mt19937_64 output is pinned by the
// standard, and all distributions below are implemented here rather than
// via std::*_distribution (whose output is implementation-defined), so
// sequences are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  static Rng stream(uint64_t master, uint64_t stream_id) {
    return Rng(mix64(master, stream_id));
  }

  uint64_t next_u64() { return eng_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Unbiased integer in [0, n) by rejection.
  uint64_t below(uint64_t n) {
    uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller, fixed evaluation order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 1e-300) u1 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rdm

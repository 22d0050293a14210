#pragma once

// Seedable RNG shared by every randomized component. mt19937_64 is bit-exact
// across platforms per the C++ standard; the distribution mappings are
// hand-rolled because std::*_distribution is not.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "sedkit/common.hpp"

namespace sedkit {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double uniform_open0() { return 1.0 - uniform01(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] via rejection (unbiased).
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (hi < lo) fail(Errc::bad_argument, "uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<int64_t>(engine_());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  // Marsaglia polar method, no cached spare (keeps the draw sequence simple).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return mean + stddev * u * std::sqrt(-2.0 * std::log(s) / s);
  }

  // Independent deterministic substream, e.g. fork("clip:17"). Depends only on
  // the construction seed and the label, not on how much has been drawn.
  Rng fork(const std::string& label) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(label)));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sedkit

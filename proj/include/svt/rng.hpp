#pragma once

// Portable pseudo-random streams.
//
// Bits come from std::mt19937_64, whose output sequence is fixed by the C++
// standard. The conversions to uniform, normal, and index values are written
// out here rather than taken from <random> distributions (whose algorithms
// are implementation-defined), so every seeded run is reproducible across
// standard libraries.
//
//   uniform()   = (next >> 11) * 2^-53                  in [0, 1)
//   index(n)    = next mod n
//   normal()    = Box-Muller on (1 - uniform(), uniform()), both outputs used
//   shuffle(v)  = Fisher-Yates: for i = n-1 down to 1, swap v[i], v[index(i+1)]

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace svt {

/// SplitMix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Normal(0, stddev) resampled until within +-bound standard deviations.
  double truncated_normal(double stddev, double bound = 2.0) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= bound) return z * stddev;
    }
  }

  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i-- > 1;) {
      using std::swap;
      swap(v[i], v[index(i + 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace svt

#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace lcs {

// Deterministic, platform-independent PRNG (splitmix64 core).
// All randomness in the project flows through this type so that a run is
// reproducible bit-for-bit from a single root seed.
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
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent substream seed from (root, component, id).
// FNV-1a over the component name, mixed with the id through splitmix.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view component,
                                 std::uint64_t id = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : component) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ULL;
  }
  Rng mix(root ^ h ^ (id * 0x9e3779b97f4a7c15ULL));
  return mix.next_u64();
}

}  // namespace lcs

#pragma once

// Seeded randomness. Only the raw 64-bit output of mt19937_64 is used (its
// sequence is fixed by the standard), and every derived variate is computed
// here, so traces are bit-identical across standard library implementations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace svs {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent child seed for replication / task `stream`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851F42D4C957F2Dull));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform on [lo, hi]; computed from uniform() so streams match across standard libraries.
  long long uniform_int(long long lo, long long hi) {
    const auto span = static_cast<double>(hi - lo + 1);
    return std::min(hi, lo + static_cast<long long>(uniform() * span));
  }

  // Number of successes in n trials; n is small (packets per slot).
  int binomial(int n, double p) {
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    int k = 0;
    for (int i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

  // Inverse-CDF draw from a discrete distribution.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // u landed in the rounding slack; return the last non-zero entry.
    for (std::size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0) return i;
    return 0;
  }

  double normal() {
    // Box-Muller; one value per call keeps the stream position simple.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace svs

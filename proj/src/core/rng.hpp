#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "core/errors.hpp"

namespace prefopt {

// Deterministic random source. std::mt19937_64 has a standard-pinned output
// sequence; all value extraction below is done by hand so that streams are
// reproducible byte-for-byte given a seed, independent of the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw DomainError("uniform_int: n must be positive");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  // Box-Muller; consumes exactly two draws per call.
  double gaussian(double mean = 0.0, double sd = 1.0) {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return mean + sd * r * std::cos(2.0 * M_PI * u2);
  }

  // Derive an independent sub-stream, e.g. fork("epoch", 3). Label and index
  // are mixed into the parent seed with splitmix64 so distinct labels give
  // unrelated streams.
  Rng fork(std::string_view label, uint64_t index = 0) const {
    uint64_t h = seed_;
    for (char c : label) h = mix(h ^ static_cast<uint64_t>(c));
    h = mix(h ^ index);
    return Rng(h);
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  // Index drawn proportionally to non-negative weights (inverse CDF).
  size_t weighted_index(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w))
        throw DomainError("weighted_index: weights must be finite and >= 0");
      total += w;
    }
    if (total <= 0.0) throw DomainError("weighted_index: all weights zero");
    const double target = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (target < acc) return i;
    }
    return weights.size() - 1;
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  uint64_t seed_ = 0;
};

}  // namespace prefopt

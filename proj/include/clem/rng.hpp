#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "clem/tensor.hpp"

namespace clem {

/// Seeded deterministic RNG. mt19937_64 output is pinned by the standard, and
/// all transforms below are explicit, so a seed reproduces the exact same
/// stream on every platform (std::uniform_real_distribution would not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // rejection sampling, unbiased
    uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (no cached spare; fixed two draws each).
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = std::max(uniform(), 1e-300);
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    return mean + sd * z;
  }

  /// Gumbel(0,1) draw: -log(-log(U)), U clamped into [1e-20, 1-1e-7].
  double gumbel() {
    double u = std::clamp(uniform(), 1e-20, 1.0 - 1e-7);
    return -std::log(-std::log(u));
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

template <class T = float>
Tensor<T> sample_gumbel(Rng& rng, int n) {
  Tensor<T> out({n});
  for (int i = 0; i < n; ++i) out.at(i) = static_cast<T>(rng.gumbel());
  return out;
}

}  // namespace clem

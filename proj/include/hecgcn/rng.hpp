#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include "hecgcn/tensor.hpp"

namespace hecgcn {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Derives a decorrelated seed for a named sub-stream (per epoch, per purpose).
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t s = seed ^ (salt * 0xD1B54A32D192ED03ull) ^ 0x8F1BBCDCBFA53E0Bull;
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

// mt19937_64 engine with hand-rolled mappings. The engine's raw output is
// pinned by the standard; avoiding std distributions keeps draws identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  // uniform in [0, 1) with 53 random bits
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // uniform in [0, n), unbiased via rejection
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 eng_;
};

// Glorot-uniform init: values uniform in +-sqrt(6 / (rows + cols)).
template <typename S>
Tensor<S> xavier_uniform(int rows, int cols, uint64_t seed) {
  if (rows <= 0 || cols <= 0) {
    throw std::invalid_argument("xavier_uniform: dimensions must be positive");
  }
  const double bound = std::sqrt(6.0 / (static_cast<double>(rows) + static_cast<double>(cols)));
  Tensor<S> t(rows, cols);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<S>((2.0 * rng.unit() - 1.0) * bound);
  return t;
}

}  // namespace hecgcn

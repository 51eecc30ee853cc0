#pragma once

#include <cstdint>
#include <random>

#include "ganmem/tensor.hpp"

namespace ganmem {

// Deterministic RNG with hand-rolled distributions so sampled streams depend
// only on the seed, not on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  double uniform() {  // [0,1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // [0,n)
    return static_cast<int>(eng_() % static_cast<uint64_t>(n));
  }

  double normal() {  // Box-Muller, one value per pair kept for simplicity
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Tensor normal_tensor(std::vector<int> shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = normal() * stddev;
    return t;
  }

  // Derive an independent stream, e.g. per layer or per step.
  static uint64_t mix(uint64_t seed, uint64_t salt) {
    uint64_t h = seed ^ (salt + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    return h;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ganmem

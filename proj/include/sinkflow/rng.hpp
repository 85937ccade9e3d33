#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sinkflow/types.hpp"

namespace sinkflow {

// splitmix64 step, used to derive well-separated child seeds from a master
// seed. The constant and mixing are the reference ones.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG wrapper. mt19937_64 output is fixed by the standard, and
// all conversions to doubles/ints below are done by hand, so streams are
// bit-identical across platforms and library versions (std::*_distribution
// would not be).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Child stream for (seed, index) pairs: per-element chains, per-trial
  // draws. Mixing through splitmix64 keeps streams with nearby indices
  // uncorrelated.
  static Rng stream(uint64_t seed, uint64_t index) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    uint64_t mixed = splitmix64(s);
    return Rng(mixed);
  }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1): 53 random mantissa bits.
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Samples an index from an unnormalized weight vector by inverse CDF.
  // The last index absorbs any floating-point slack.
  int categorical(const double* w, int k) {
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      if (w[i] < 0.0) throw InvalidInputError("categorical: negative weight");
      total += w[i];
    }
    if (total <= 0.0) throw InvalidInputError("categorical: all-zero weights");
    double u = uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
      acc += w[i];
      if (u < acc) return i;
    }
    return k - 1;
  }

  Matrix uniform_matrix(int rows, int cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
    return m;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sinkflow

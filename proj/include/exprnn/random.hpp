#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "exprnn/matcore.hpp"

namespace exprnn {

using Rng = std::mt19937_64;

/// Seed used by every experiment unless overridden.
inline constexpr std::uint64_t kDefaultSeed = 5544;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

/// Uniform entries above the diagonal, mirrored with opposite sign.
inline Matrix random_skew(std::size_t n, Rng& rng, double scale = 1.0) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = uniform(rng, -scale, scale);
      a(i, j) = v;
      a(j, i) = -v;
    }
  return a;
}

inline Matrix random_symmetric(std::size_t n, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = uniform(rng, -1.0, 1.0);
      a(i, j) = v;
      a(j, i) = v;
    }
  return a;
}

}  // namespace exprnn

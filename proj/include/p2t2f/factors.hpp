#pragma once

#include <cstdint>
#include <random>

#include "p2t2f/error.hpp"
#include "p2t2f/matrix.hpp"

namespace p2t2f {

// Latent factors of one worker (or of a whole model when rows == I).
struct FactorSet {
  Matrix A;   // rows x R
  Matrix B;   // J x R
  Matrix C;   // K x R
  Matrix C0;  // 1 x R, time anchor preceding C_1

  std::size_t rank() const noexcept { return B.cols(); }

  bool finite() const {
    return all_finite(A) && all_finite(B) && all_finite(C) && all_finite(C0);
  }

  friend bool operator==(const FactorSet&, const FactorSet&) = default;
};

// Entries i.i.d. N(0, scale^2), drawn in the order A, B, C, C0 from a
// generator seeded with `seed`.
inline FactorSet init_factors(std::size_t rows, std::size_t J, std::size_t K,
                              std::size_t R, std::uint64_t seed, double scale = 0.1) {
  detail::require(rows >= 1 && J >= 1 && K >= 1 && R >= 1,
                  "init_factors: dimensions must be >= 1");
  detail::require(scale > 0.0, "init_factors: scale must be positive");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, scale);
  FactorSet f{Matrix(rows, R), Matrix(J, R), Matrix(K, R), Matrix(1, R)};
  for (Matrix* m : {&f.A, &f.B, &f.C, &f.C0})
    for (double& x : m->data()) x = normal(gen);
  return f;
}

}  // namespace p2t2f

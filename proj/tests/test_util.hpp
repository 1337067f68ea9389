#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "p2t2f/p2t2f.hpp"

namespace p2t2f::testutil {

// Random tensor with distinct cells and values in [-bound, bound].
inline SparseTemporalTensor random_tensor(Dims d, std::size_t nnz, std::uint64_t seed,
                                          double bound = 5.0) {
  SyntheticSpec s;
  s.I = d.I;
  s.J = d.J;
  s.K = d.K;
  s.density = static_cast<double>(nnz) / static_cast<double>(d.I * d.J * d.K);
  s.seed = seed;
  SparseTemporalTensor t = gen_synthetic(s).tensor;
  std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> val(-bound, bound);
  for (auto& e : t.entries) e.value = val(gen);
  return t;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& gen,
                            double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(gen);
  return m;
}

inline DualPair random_duals(std::size_t J, std::size_t K, std::size_t R, std::mt19937_64& gen) {
  return {random_matrix(J, R, gen, 0.3), random_matrix(K, R, gen, 0.3)};
}

// Central finite difference of fn with respect to every entry of m.
inline Matrix finite_difference(Matrix& m, const std::function<double()>& fn,
                                double h = 1e-5) {
  Matrix g(m.rows(), m.cols());
  for (std::size_t n = 0; n < m.size(); ++n) {
    double& x = m.data()[n];
    const double saved = x;
    x = saved + h;
    const double up = fn();
    x = saved - h;
    const double down = fn();
    x = saved;
    g.data()[n] = (up - down) / (2 * h);
  }
  return g;
}

// max |a - b| / max(1, max |b|)
inline double relative_error(const Matrix& a, const Matrix& b) {
  double num = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n)
    num = std::max(num, std::abs(a.data()[n] - b.data()[n]));
  return num / std::max(1.0, max_abs(b));
}

}  // namespace p2t2f::testutil

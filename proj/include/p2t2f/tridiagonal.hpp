#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "p2t2f/error.hpp"
#include "p2t2f/matrix.hpp"

namespace p2t2f {

// Symmetric tridiagonal n x n matrix: diag[0..n), off[0..n-1) holds the
// entries (k, k+1) == (k+1, k).
struct SymTridiagonal {
  std::vector<double> diag;
  std::vector<double> off;

  std::size_t size() const noexcept { return diag.size(); }

  double operator()(std::size_t r, std::size_t c) const {
    if (r == c) return diag[r];
    if (r + 1 == c) return off[r];
    if (c + 1 == r) return off[c];
    return 0.0;
  }
};

// Time-chain coupling matrix: 2 on the diagonal except a trailing 1, -1 on
// both off-diagonals. Row k holds the coefficients of d/dC_k of
// 1/2 sum_{k=1..K} ||C_k - C_{k-1}||^2 once the C_0 term is moved right.
inline SymTridiagonal build_S(std::size_t K) {
  detail::require(K >= 1, "build_S: K must be >= 1");
  SymTridiagonal s{std::vector<double>(K, 2.0), std::vector<double>(K - 1, -1.0)};
  s.diag.back() = 1.0;
  return s;
}

// Q = (1/tau + rho_C) I + lambda_C S
inline SymTridiagonal build_Q(std::size_t K, double tau, double rho_C, double lambda_C) {
  detail::require(tau > 0, "build_Q: tau must be positive");
  SymTridiagonal q = build_S(K);
  const double shift = 1.0 / tau + rho_C;
  for (double& d : q.diag) d = shift + lambda_C * d;
  for (double& o : q.off) o *= lambda_C;
  return q;
}

// Solves m X = rhs column by column (Thomas algorithm, no pivoting) and
// overwrites rhs with X. Meant for diagonally dominant systems.
inline void solve_tridiagonal_inplace(const SymTridiagonal& m, Matrix& rhs) {
  const std::size_t n = m.size();
  detail::require_shape(rhs.rows() == n, "solve_tridiagonal: rhs rows differ from system size");
  if (n == 0) return;
  const std::size_t cols = rhs.cols();

  // Factor once; the modified super-diagonal and pivots are shared by all columns.
  std::vector<double> c_star(n, 0.0);
  std::vector<double> pivot(n);
  pivot[0] = m.diag[0];
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) pivot[k] = m.diag[k] - m.off[k - 1] * c_star[k - 1];
    if (!(std::abs(pivot[k]) > std::numeric_limits<double>::epsilon() * 16) ||
        !std::isfinite(pivot[k]))
      throw Error("solve_tridiagonal: numerically singular system");
    if (k + 1 < n) c_star[k] = m.off[k] / pivot[k];
  }

  for (std::size_t col = 0; col < cols; ++col) {
    rhs(0, col) /= pivot[0];
    for (std::size_t k = 1; k < n; ++k)
      rhs(k, col) = (rhs(k, col) - m.off[k - 1] * rhs(k - 1, col)) / pivot[k];
    for (std::size_t k = n - 1; k-- > 0;) rhs(k, col) -= c_star[k] * rhs(k + 1, col);
  }
}

inline Matrix solve_tridiagonal(const SymTridiagonal& m, Matrix rhs) {
  solve_tridiagonal_inplace(m, rhs);
  return rhs;
}

}  // namespace p2t2f

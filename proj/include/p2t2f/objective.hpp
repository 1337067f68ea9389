#pragma once

#include <cmath>
#include <span>

#include "p2t2f/error.hpp"
#include "p2t2f/factors.hpp"
#include "p2t2f/hyperparams.hpp"
#include "p2t2f/matrix.hpp"
#include "p2t2f/tensor.hpp"

namespace p2t2f {

// Lagrange multipliers of one worker for the B and C consensus constraints.
struct DualPair {
  Matrix theta_B;  // J x R
  Matrix theta_C;  // K x R
};

struct GradientSet {
  Matrix dA;
  Matrix dB;
  Matrix dC;
};

// CP model value <a, b, c> = sum_r a_r b_r c_r.
inline double predict(std::span<const double> a, std::span<const double> b,
                      std::span<const double> c) {
  detail::require_shape(a.size() == b.size() && b.size() == c.size(),
                        "predict: vector lengths differ");
  double s = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) s += a[r] * b[r] * c[r];
  return s;
}

namespace detail {

inline void check_factor_shapes(const Dims& d, const Matrix& A, const Matrix& B,
                                const Matrix& C) {
  require_shape(A.rows() == d.I && B.rows() == d.J && C.rows() == d.K,
                "factor rows do not match tensor dims");
  require_shape(A.cols() == B.cols() && B.cols() == C.cols(),
                "factor matrices have different rank");
}

inline void check_factor_shapes(const Dims& d, const FactorSet& f) {
  check_factor_shapes(d, f.A, f.B, f.C);
  require_shape(f.C0.rows() == 1 && f.C0.cols() == f.C.cols(), "C0 must be 1 x R");
}

}  // namespace detail

// Sum of squared residuals over the entries of t.
inline double sum_squared_residuals(const SparseTemporalTensor& t, const Matrix& A,
                                    const Matrix& B, const Matrix& C) {
  detail::check_factor_shapes(t.dims, A, B, C);
  double s = 0.0;
  for (const Entry& e : t.entries) {
    const double r = e.value - predict(A.row(e.i), B.row(e.j), C.row(e.k));
    s += r * r;
  }
  return s;
}

// f = 1/2 sum (x - <A_i, B_j, C_k>)^2
inline double loss_f(const SparseTemporalTensor& t, const FactorSet& f) {
  return 0.5 * sum_squared_residuals(t, f.A, f.B, f.C);
}

// lambda_C/2 sum_{k=1..K} ||C_k - C_{k-1}||^2 with C_0 the anchor row.
inline double time_chain_penalty(const Matrix& C, const Matrix& C0) {
  double s = 0.0;
  for (std::size_t k = 0; k < C.rows(); ++k) {
    auto prev = k == 0 ? C0.row(0) : C.row(k - 1);
    auto cur = C.row(k);
    for (std::size_t r = 0; r < cur.size(); ++r) {
      const double d = cur[r] - prev[r];
      s += d * d;
    }
  }
  return s;
}

inline double loss_g(const FactorSet& f, const HyperParams& hp) {
  detail::require_shape(f.A.cols() == f.B.cols() && f.B.cols() == f.C.cols() &&
                            f.C0.rows() == 1 && f.C0.cols() == f.C.cols(),
                        "loss_g: inconsistent ranks");
  detail::require_shape(hp.mu_C.empty() || hp.mu_C.size() == f.C0.cols(),
                        "loss_g: mu_C width differs from rank");
  double anchor = 0.0;
  for (std::size_t r = 0; r < f.C0.cols(); ++r) {
    const double d = f.C0(0, r) - hp.mu(r);
    anchor += d * d;
  }
  return 0.5 * hp.lambda_A * frobenius_sq(f.A) + 0.5 * hp.lambda_B * frobenius_sq(f.B) +
         0.5 * hp.lambda_C * time_chain_penalty(f.C, f.C0) + 0.5 * hp.lambda_0 * anchor;
}

// Augmented-Lagrangian coupling of local B, C to the consensus B_bar, C_bar.
inline double loss_l(const Matrix& B, const Matrix& C, const DualPair& duals,
                     const Matrix& B_bar, const Matrix& C_bar, const HyperParams& hp) {
  detail::require_shape(B.same_shape(B_bar) && B.same_shape(duals.theta_B),
                        "loss_l: B shapes differ");
  detail::require_shape(C.same_shape(C_bar) && C.same_shape(duals.theta_C),
                        "loss_l: C shapes differ");
  double tr_b = 0.0, tr_c = 0.0;
  auto b = B.data(), bb = B_bar.data(), tb = duals.theta_B.data();
  for (std::size_t n = 0; n < b.size(); ++n) tr_b += tb[n] * (b[n] - bb[n]);
  auto c = C.data(), cb = C_bar.data(), tc = duals.theta_C.data();
  for (std::size_t n = 0; n < c.size(); ++n) tr_c += tc[n] * (c[n] - cb[n]);
  return tr_b + 0.5 * hp.rho_B * distance_sq(B, B_bar) + tr_c +
         0.5 * hp.rho_C * distance_sq(C, C_bar);
}

// L^p = f + g + l
inline double local_lagrangian(const SparseTemporalTensor& t, const FactorSet& f,
                               const DualPair& duals, const Matrix& B_bar,
                               const Matrix& C_bar, const HyperParams& hp) {
  detail::check_factor_shapes(t.dims, f);
  return loss_f(t, f) + loss_g(f, hp) + loss_l(f.B, f.C, duals, B_bar, C_bar, hp);
}

// Gradient of loss_f. The residual of each entry is computed once and shared
// by the three blocks.
inline GradientSet grad_f(const SparseTemporalTensor& t, const FactorSet& f) {
  detail::check_factor_shapes(t.dims, f.A, f.B, f.C);
  const std::size_t R = f.B.cols();
  GradientSet g{Matrix(f.A.rows(), R), Matrix(f.B.rows(), R), Matrix(f.C.rows(), R)};
  for (const Entry& e : t.entries) {
    auto a = f.A.row(e.i);
    auto b = f.B.row(e.j);
    auto c = f.C.row(e.k);
    const double eps = e.value - predict(a, b, c);
    auto da = g.dA.row(e.i);
    auto db = g.dB.row(e.j);
    auto dc = g.dC.row(e.k);
    for (std::size_t r = 0; r < R; ++r) {
      da[r] -= eps * b[r] * c[r];
      db[r] -= eps * a[r] * c[r];
      dc[r] -= eps * a[r] * b[r];
    }
  }
  return g;
}

// Convex majorizer of the local Lagrangian around `current`: f linearized at
// `current` plus a proximal term of weight 1/(2 tau), with g and l exact in
// the candidate. C0 is held at the supplied anchor.
inline double surrogate_H(const FactorSet& candidate, const FactorSet& current,
                          const SparseTemporalTensor& t, const Matrix& C0,
                          const DualPair& duals, const Matrix& B_bar, const Matrix& C_bar,
                          double tau, const HyperParams& hp) {
  if (!(tau > 0)) throw InvalidArgument("surrogate_H: tau must be positive");
  detail::check_factor_shapes(t.dims, current.A, current.B, current.C);
  detail::require_shape(candidate.A.same_shape(current.A) &&
                            candidate.B.same_shape(current.B) &&
                            candidate.C.same_shape(current.C),
                        "surrogate_H: candidate and current shapes differ");

  const GradientSet grad = grad_f(t, current);
  double linear = 0.0;
  const auto lin = [&](const Matrix& d, const Matrix& x, const Matrix& x0) {
    auto dd = d.data(), xx = x.data(), x00 = x0.data();
    for (std::size_t n = 0; n < dd.size(); ++n) linear += dd[n] * (xx[n] - x00[n]);
  };
  lin(grad.dA, candidate.A, current.A);
  lin(grad.dB, candidate.B, current.B);
  lin(grad.dC, candidate.C, current.C);
  const double prox = (distance_sq(candidate.A, current.A) +
                       distance_sq(candidate.B, current.B) +
                       distance_sq(candidate.C, current.C)) /
                      (2.0 * tau);
  const double h = loss_f(t, current) + (linear + prox);

  FactorSet anchored{candidate.A, candidate.B, candidate.C, C0};
  return h + loss_g(anchored, hp) + loss_l(candidate.B, candidate.C, duals, B_bar, C_bar, hp);
}

inline double rmse(const SparseTemporalTensor& t, const Matrix& A, const Matrix& B,
                   const Matrix& C) {
  if (t.entries.empty()) throw InvalidArgument("rmse: empty entry set");
  return std::sqrt(sum_squared_residuals(t, A, B, C) / static_cast<double>(t.nnz()));
}

}  // namespace p2t2f

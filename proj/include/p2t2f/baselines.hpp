#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "p2t2f/admm.hpp"
#include "p2t2f/error.hpp"
#include "p2t2f/factors.hpp"
#include "p2t2f/hyperparams.hpp"
#include "p2t2f/objective.hpp"
#include "p2t2f/report.hpp"
#include "p2t2f/tensor.hpp"

namespace p2t2f {

// Sequential SGD comparators. CP uses lambda_A/B/C as plain ridge weights
// (all equal gives the classic single-lambda CP objective); PTTF replaces
// the ridge on C with the time chain and uses lambda_0 for the anchor.
struct SgdParams {
  double eta = 0.01;
  double eta_decay = 0.99;  // eta_t = eta * eta_decay^t
  double lambda_A = 0.01;
  double lambda_B = 0.01;
  double lambda_C = 0.01;
  double lambda_0 = 0.01;
  std::vector<double> mu_C;
  std::size_t R = 20;
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
  double rmse_threshold = 1e-4;
  double init_scale = 0.1;
  bool stop_on_convergence = true;

  void validate() const {
    detail::require(eta > 0, "sgd: eta must be positive");
    detail::require(eta_decay > 0 && eta_decay <= 1, "sgd: eta_decay must lie in (0,1]");
    detail::require(lambda_A >= 0 && lambda_B >= 0 && lambda_C >= 0 && lambda_0 >= 0,
                    "sgd: regularizers must be nonnegative");
    detail::require(R >= 1 && max_iter >= 1, "sgd: rank and max_iter must be >= 1");
    detail::require(rmse_threshold > 0, "sgd: rmse threshold must be positive");
    detail::require(mu_C.empty() || mu_C.size() == R, "sgd: mu_C must have R entries");
  }

  HyperParams as_hyperparams() const {
    HyperParams hp;
    hp.lambda_A = lambda_A;
    hp.lambda_B = lambda_B;
    hp.lambda_C = lambda_C;
    hp.lambda_0 = lambda_0;
    hp.mu_C = mu_C;
    hp.R = R;
    return hp;
  }
};

// 1/2 SSR + lambda_A/2 ||A||^2 + lambda_B/2 ||B||^2 + lambda_C/2 ||C||^2
inline double cp_objective(const SparseTemporalTensor& t, const FactorSet& f,
                           const SgdParams& p) {
  return 0.5 * sum_squared_residuals(t, f.A, f.B, f.C) + 0.5 * p.lambda_A * frobenius_sq(f.A) +
         0.5 * p.lambda_B * frobenius_sq(f.B) + 0.5 * p.lambda_C * frobenius_sq(f.C);
}

// 1/2 SSR + ridge on A, B + time chain on C + anchor on C0.
inline double pttf_objective(const SparseTemporalTensor& t, const FactorSet& f,
                             const SgdParams& p) {
  return loss_f(t, f) + loss_g(f, p.as_hyperparams());
}

inline GradientSet cp_gradient(const SparseTemporalTensor& t, const FactorSet& f,
                               const SgdParams& p) {
  GradientSet g = grad_f(t, f);
  auto add = [](Matrix& d, const Matrix& x, double lambda) {
    auto dd = d.data();
    auto xx = x.data();
    for (std::size_t n = 0; n < dd.size(); ++n) dd[n] += lambda * xx[n];
  };
  add(g.dA, f.A, p.lambda_A);
  add(g.dB, f.B, p.lambda_B);
  add(g.dC, f.C, p.lambda_C);
  return g;
}

// Gradient of pttf_objective in A, B, C, plus d/dC0 in `dC0`.
inline GradientSet pttf_gradient(const SparseTemporalTensor& t, const FactorSet& f,
                                 const SgdParams& p, Matrix* dC0 = nullptr) {
  GradientSet g = grad_f(t, f);
  auto dd = g.dA.data();
  for (std::size_t n = 0; n < dd.size(); ++n) dd[n] += p.lambda_A * f.A.data()[n];
  dd = g.dB.data();
  for (std::size_t n = 0; n < dd.size(); ++n) dd[n] += p.lambda_B * f.B.data()[n];
  const std::size_t K = f.C.rows();
  const std::size_t R = f.C.cols();
  for (std::size_t k = 0; k < K; ++k) {
    auto prev = k == 0 ? f.C0.row(0) : f.C.row(k - 1);
    for (std::size_t r = 0; r < R; ++r) {
      double chain = f.C(k, r) - prev[r];
      if (k + 1 < K) chain += f.C(k, r) - f.C(k + 1, r);
      g.dC(k, r) += p.lambda_C * chain;
    }
  }
  if (dC0 != nullptr) {
    *dC0 = Matrix(1, R);
    for (std::size_t r = 0; r < R; ++r)
      (*dC0)(0, r) = p.lambda_C * (f.C0(0, r) - f.C(0, r)) +
                     p.lambda_0 * (f.C0(0, r) - (p.mu_C.empty() ? 0.0 : p.mu_C[r]));
  }
  return g;
}

// x += eta (eps * (y * z) - lambda * x), Jacobi within the entry.
inline void cp_sgd_step(const Entry& e, FactorSet& f, double eta, const SgdParams& p) {
  auto a = f.A.row(e.i);
  auto b = f.B.row(e.j);
  auto c = f.C.row(e.k);
  const double eps = e.value - predict(a, b, c);
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r], br = b[r], cr = c[r];
    a[r] = ar + eta * (eps * (br * cr) - p.lambda_A * ar);
    b[r] = br + eta * (eps * (ar * cr) - p.lambda_B * br);
    c[r] = cr + eta * (eps * (ar * br) - p.lambda_C * cr);
  }
}

// As cp_sgd_step, but C_k is pulled toward its neighbours C_{k-1} (C0 when
// k = 1) and C_{k+1} (absent when k = K) instead of toward zero.
inline void pttf_sgd_step(const Entry& e, FactorSet& f, double eta, const SgdParams& p) {
  const std::size_t K = f.C.rows();
  auto a = f.A.row(e.i);
  auto b = f.B.row(e.j);
  auto c = f.C.row(e.k);
  auto prev = e.k == 0 ? f.C0.row(0) : f.C.row(e.k - 1);
  const bool last = e.k + 1 == K;
  const double eps = e.value - predict(a, b, c);
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r], br = b[r], cr = c[r];
    const double chain = (cr - prev[r]) + (last ? 0.0 : cr - f.C(e.k + 1, r));
    a[r] = ar + eta * (eps * (br * cr) - p.lambda_A * ar);
    b[r] = br + eta * (eps * (ar * cr) - p.lambda_B * br);
    c[r] = cr + eta * (eps * (ar * br) - p.lambda_C * chain);
  }
}

namespace detail {

template <class Step, class Refresh, class Objective>
TrainReport run_sgd(const std::string& method, const SparseTemporalTensor& tensor,
                    const SparseTemporalTensor* test, const SgdParams& p, Step step,
                    Refresh refresh, Objective objective) {
  p.validate();
  require_valid(tensor);
  if (test != nullptr && !test->entries.empty())
    require_shape(test->dims == tensor.dims, "sgd: test dims differ from train dims");
  const Dims& d = tensor.dims;
  FactorSet f = init_factors(d.I, d.J, d.K, p.R, p.seed, p.init_scale);

  TrainReport report;
  report.method = method;
  std::vector<double> history;
  std::vector<std::uint32_t> order(tensor.nnz());
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  double eta = p.eta;
  for (std::size_t epoch = 1; epoch <= p.max_iter; ++epoch) {
    refresh(f);
    std::iota(order.begin(), order.end(), 0u);
    std::seed_seq sq{static_cast<std::uint64_t>(p.seed), static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(sq);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::uint32_t n : order) step(tensor.entries[n], f, eta, p);

    IterationRecord rec;
    rec.iter = epoch;
    rec.tau = eta;
    rec.objective = objective(tensor, f, p);
    if (!std::isfinite(rec.objective)) throw DivergenceError(method, epoch);
    rec.train_rmse = rmse(tensor, f.A, f.B, f.C);
    if (test != nullptr && !test->entries.empty()) rec.test_rmse = rmse(*test, f.A, f.B, f.C);
    rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
    report.iterations.push_back(rec);
    history.push_back(rec.train_rmse);
    if (p.stop_on_convergence && converged(history, p.rmse_threshold)) {
      report.converged = true;
      break;
    }
    eta *= p.eta_decay;
  }
  report.total_seconds = report.iterations.back().seconds;
  report.A = std::move(f.A);
  report.B = std::move(f.B);
  report.C = std::move(f.C);
  return report;
}

}  // namespace detail

inline TrainReport cp_sgd_train(const SparseTemporalTensor& tensor,
                                const SparseTemporalTensor* test, const SgdParams& p) {
  return detail::run_sgd("cp", tensor, test, p, cp_sgd_step, [](FactorSet&) {},
                         cp_objective);
}

inline TrainReport pttf_sgd_train(const SparseTemporalTensor& tensor,
                                  const SparseTemporalTensor* test, const SgdParams& p) {
  const HyperParams hp = p.as_hyperparams();
  auto refresh = [&](FactorSet& f) {
    // C0 carries no weight when both chain and anchor are off
    if (hp.lambda_0 + hp.lambda_C > 0) f.C0 = update_c0(f.C.row(0), hp);
  };
  return detail::run_sgd("pttf", tensor, test, p, pttf_sgd_step, refresh, pttf_objective);
}

}  // namespace p2t2f

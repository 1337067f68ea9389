#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "p2t2f/error.hpp"
#include "p2t2f/factors.hpp"
#include "p2t2f/hyperparams.hpp"
#include "p2t2f/matrix.hpp"
#include "p2t2f/objective.hpp"
#include "p2t2f/report.hpp"
#include "p2t2f/tensor.hpp"
#include "p2t2f/tridiagonal.hpp"
#include "p2t2f/worker_pool.hpp"

namespace p2t2f {

enum class UpdateMode { Stochastic, Batch };

// Everything one worker owns exclusively: its factor copies, its anchor C0
// (inside factors), its multipliers and a view of its data block.
struct WorkerState {
  FactorSet factors;
  DualPair duals;
  const PartitionBlock* block = nullptr;
};

struct ConsensusState {
  Matrix B_bar;
  Matrix C_bar;
};

// Closed-form minimizer of L^p over C0:
// (lambda_C C_1 + lambda_0 mu_C) / (lambda_0 + lambda_C).
inline Matrix update_c0(std::span<const double> C1, const HyperParams& hp) {
  const double denom = hp.lambda_0 + hp.lambda_C;
  if (!(denom > 0)) throw InvalidArgument("update_c0: lambda_0 + lambda_C must be positive");
  detail::require_shape(hp.mu_C.empty() || hp.mu_C.size() == C1.size(),
                        "update_c0: mu_C width differs from rank");
  Matrix c0(1, C1.size());
  for (std::size_t r = 0; r < C1.size(); ++r)
    c0(0, r) = (hp.lambda_C * C1[r] + hp.lambda_0 * hp.mu(r)) / denom;
  return c0;
}

inline ConsensusState consensus_average(std::span<const WorkerState> workers) {
  detail::require(!workers.empty(), "consensus_average: no workers");
  ConsensusState s{Matrix(workers[0].factors.B.rows(), workers[0].factors.B.cols()),
                   Matrix(workers[0].factors.C.rows(), workers[0].factors.C.cols())};
  for (const auto& w : workers) {
    detail::require_shape(w.factors.B.same_shape(s.B_bar) && w.factors.C.same_shape(s.C_bar),
                          "consensus_average: worker shapes differ");
    auto b = w.factors.B.data();
    auto bb = s.B_bar.data();
    for (std::size_t n = 0; n < b.size(); ++n) bb[n] += b[n];
    auto c = w.factors.C.data();
    auto cb = s.C_bar.data();
    for (std::size_t n = 0; n < c.size(); ++n) cb[n] += c[n];
  }
  const double inv = 1.0 / static_cast<double>(workers.size());
  for (double& x : s.B_bar.data()) x *= inv;
  for (double& x : s.C_bar.data()) x *= inv;
  return s;
}

// Dual ascent: theta += rho * (local - consensus).
inline DualPair dual_update(const WorkerState& w, const ConsensusState& cs,
                            const HyperParams& hp) {
  detail::require_shape(w.factors.B.same_shape(cs.B_bar) &&
                            w.duals.theta_B.same_shape(cs.B_bar),
                        "dual_update: B shapes differ");
  detail::require_shape(w.factors.C.same_shape(cs.C_bar) &&
                            w.duals.theta_C.same_shape(cs.C_bar),
                        "dual_update: C shapes differ");
  DualPair d = w.duals;
  auto step = [](Matrix& theta, const Matrix& local, const Matrix& bar, double rho) {
    auto t = theta.data();
    auto l = local.data();
    auto g = bar.data();
    for (std::size_t n = 0; n < t.size(); ++n) t[n] += rho * (l[n] - g[n]);
  };
  step(d.theta_B, w.factors.B, cs.B_bar, hp.rho_B);
  step(d.theta_C, w.factors.C, cs.C_bar, hp.rho_C);
  return d;
}

// One stochastic step on entry e. Every right-hand quantity is read before
// any row is written, and the residual is shared by the three rows. At k = 1
// the previous row is C0; at k = K the missing successor drops out and the
// chain weight in the denominator halves, matching the last row of S.
inline void stochastic_update_entry(const Entry& e, FactorSet& f, const DualPair& duals,
                                    const ConsensusState& cs, double tau,
                                    const HyperParams& hp) {
  if (!(tau > 0)) throw InvalidArgument("stochastic_update_entry: tau must be positive");
  const std::size_t K = f.C.rows();
  auto a = f.A.row(e.i);
  auto b = f.B.row(e.j);
  auto c = f.C.row(e.k);
  const double eps = e.value - predict(a, b, c);

  auto prev = e.k == 0 ? f.C0.row(0) : f.C.row(e.k - 1);
  const bool last = e.k + 1 == K;
  auto next = last ? std::span<const double>{} : std::span<const double>(f.C.row(e.k + 1));

  auto bar_b = cs.B_bar.row(e.j);
  auto bar_c = cs.C_bar.row(e.k);
  auto th_b = duals.theta_B.row(e.j);
  auto th_c = duals.theta_C.row(e.k);

  const double inv_tau = 1.0 / tau;
  const double a_den = 1.0 + hp.lambda_A * tau;
  const double b_den = inv_tau + hp.lambda_B + hp.rho_B;
  const double c_den = inv_tau + (last ? 1.0 : 2.0) * hp.lambda_C + hp.rho_C;

  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = a[r], br = b[r], cr = c[r];
    const double neighbours = prev[r] + (last ? 0.0 : next[r]);
    a[r] = (ar + tau * eps * (br * cr)) / a_den;
    b[r] = (br * inv_tau + hp.rho_B * bar_b[r] - th_b[r] + eps * (ar * cr)) / b_den;
    c[r] = (cr * inv_tau + hp.rho_C * bar_c[r] + hp.lambda_C * neighbours - th_c[r] +
            eps * (ar * br)) /
           c_den;
  }
}

// Exact minimizer of the surrogate: closed forms for A and B, and a
// tridiagonal solve Q C = RHS for the time factor.
inline FactorSet batch_update_factors(const SparseTemporalTensor& sub, const FactorSet& f,
                                      const DualPair& duals, const ConsensusState& cs,
                                      double tau, const HyperParams& hp) {
  if (!(tau > 0)) throw InvalidArgument("batch_update_factors: tau must be positive");
  const GradientSet g = grad_f(sub, f);
  FactorSet out = f;

  const double a_scale = 1.0 / (1.0 + hp.lambda_A * tau);
  {
    auto x = out.A.data();
    auto d = g.dA.data();
    for (std::size_t n = 0; n < x.size(); ++n) x[n] = (x[n] - tau * d[n]) * a_scale;
  }

  const double inv_tau = 1.0 / tau;
  {
    const double den = inv_tau + hp.lambda_B + hp.rho_B;
    auto x = out.B.data();
    auto bar = cs.B_bar.data();
    auto th = duals.theta_B.data();
    auto d = g.dB.data();
    for (std::size_t n = 0; n < x.size(); ++n)
      x[n] = (x[n] * inv_tau + hp.rho_B * bar[n] - th[n] - d[n]) / den;
  }

  {
    auto x = out.C.data();
    auto bar = cs.C_bar.data();
    auto th = duals.theta_C.data();
    auto d = g.dC.data();
    for (std::size_t n = 0; n < x.size(); ++n)
      x[n] = x[n] * inv_tau + hp.rho_C * bar[n] - th[n] - d[n];
    auto first = out.C.row(0);
    auto c0 = f.C0.row(0);
    for (std::size_t r = 0; r < first.size(); ++r) first[r] += hp.lambda_C * c0[r];
    solve_tridiagonal_inplace(build_Q(f.C.rows(), tau, hp.rho_C, hp.lambda_C), out.C);
  }
  return out;
}

// Geometric decay by beta, never going below alpha; a tau already at or
// below the floor is kept.
inline double tau_next(double tau, const HyperParams& hp) {
  if (tau <= hp.alpha) return tau;
  return std::max(tau * hp.beta, hp.alpha);
}

struct TrainOptions {
  std::size_t workers = 1;
  UpdateMode mode = UpdateMode::Stochastic;
  std::size_t max_iter = 100;
  std::uint64_t seed = 0;
  bool stop_on_convergence = true;
};

// Sum over workers of L^p just before and just after the factor step of one
// iteration, with C0, duals and consensus at their pre-step values.
struct FactorStepTrace {
  double before = 0.0;
  double after = 0.0;
};

// The training loop, exposed phase by phase. Workers are updated in
// parallel on a fixed thread pool; everything between phases runs on the
// calling thread.
class Engine {
 public:
  Engine(const SparseTemporalTensor& train, const SparseTemporalTensor* test,
         const HyperParams& hp, const TrainOptions& opt)
      : hp_(hp), opt_(opt), tau_(hp.tau0), pool_(opt.workers) {
    hp_.validate();
    detail::require(opt.max_iter >= 1, "train: max_iter must be >= 1");
    require_valid(train);
    partition_ = split_tensor(train, opt.workers);
    if (test != nullptr && !test->entries.empty()) {
      detail::require_shape(test->dims == train.dims, "train: test dims differ from train dims");
      test_partition_ = split_tensor(*test, opt.workers);
    }
    const Dims& d = train.dims;
    const FactorSet init = init_factors(d.I, d.J, d.K, hp_.R, opt.seed, hp_.init_scale);
    workers_.resize(opt.workers);
    for (std::size_t p = 0; p < workers_.size(); ++p) {
      const auto& blk = partition_.blocks[p];
      WorkerState& w = workers_[p];
      w.block = &blk;
      w.factors.A = Matrix(blk.rows(), hp_.R);
      for (std::size_t i = 0; i < blk.rows(); ++i)
        std::ranges::copy(init.A.row(blk.row_begin + i), w.factors.A.row(i).begin());
      w.factors.B = init.B;
      w.factors.C = init.C;
      w.factors.C0 = init.C0;
      w.duals = {Matrix(d.J, hp_.R), Matrix(d.K, hp_.R)};
    }
    consensus_ = consensus_average(workers_);
  }

  // Per-worker local pass: refresh C0, then one shuffled stochastic sweep
  // or one batch step, against the frozen consensus and duals.
  void local_phase(std::optional<FactorStepTrace>* trace = nullptr) {
    const std::size_t iter = iteration_ + 1;
    std::vector<FactorStepTrace> parts(trace ? workers_.size() : 0);
    pool_.run(workers_.size(), [&](std::size_t p) {
      WorkerState& w = workers_[p];
      const auto& sub = w.block->subtensor;
      if (hp_.lambda_0 + hp_.lambda_C > 0) w.factors.C0 = update_c0(w.factors.C.row(0), hp_);
      if (trace)
        parts[p].before = local_lagrangian(sub, w.factors, w.duals, consensus_.B_bar,
                                           consensus_.C_bar, hp_);
      if (opt_.mode == UpdateMode::Batch) {
        w.factors = batch_update_factors(sub, w.factors, w.duals, consensus_, tau_, hp_);
      } else {
        std::vector<std::uint32_t> order(sub.entries.size());
        std::iota(order.begin(), order.end(), 0u);
        std::seed_seq sq{static_cast<std::uint64_t>(opt_.seed), static_cast<std::uint64_t>(p),
                         static_cast<std::uint64_t>(iter)};
        std::mt19937_64 rng(sq);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::uint32_t n : order)
          stochastic_update_entry(sub.entries[n], w.factors, w.duals, consensus_, tau_, hp_);
      }
      if (trace)
        parts[p].after = local_lagrangian(sub, w.factors, w.duals, consensus_.B_bar,
                                          consensus_.C_bar, hp_);
    });
    if (trace) {
      FactorStepTrace total;
      for (const auto& t : parts) {
        total.before += t.before;
        total.after += t.after;
      }
      *trace = total;
    }
  }

  void consensus_phase() { consensus_ = consensus_average(workers_); }

  void dual_phase() {
    pool_.run(workers_.size(), [&](std::size_t p) {
      workers_[p].duals = dual_update(workers_[p], consensus_, hp_);
    });
  }

  // One full iteration; appends to the history and decays tau.
  const IterationRecord& step(std::optional<FactorStepTrace>* trace = nullptr) {
    local_phase(trace);
    consensus_phase();
    dual_phase();
    ++iteration_;

    IterationRecord rec;
    rec.iter = iteration_;
    rec.tau = tau_;
    evaluate(rec);
    if (!std::isfinite(rec.objective) || !std::isfinite(rec.train_rmse))
      throw DivergenceError("p2t2f", iteration_);
    history_.push_back(rec);
    train_rmse_.push_back(rec.train_rmse);
    tau_ = tau_next(tau_, hp_);
    return history_.back();
  }

  bool converged() const { return p2t2f::converged(train_rmse_, hp_.rmse_threshold); }

  // A = [A^1; A^2; ...; A^P]
  Matrix stacked_A() const {
    Matrix A(partition_.global_dims.I, hp_.R);
    for (const auto& w : workers_)
      for (std::size_t i = 0; i < w.factors.A.rows(); ++i)
        std::ranges::copy(w.factors.A.row(i), A.row(w.block->row_begin + i).begin());
    return A;
  }

  double global_objective() const {
    double s = 0.0;
    for (const auto& w : workers_)
      s += local_lagrangian(w.block->subtensor, w.factors, w.duals, consensus_.B_bar,
                            consensus_.C_bar, hp_);
    return s;
  }

  std::span<const WorkerState> workers() const { return workers_; }
  std::span<WorkerState> workers() { return workers_; }
  const ConsensusState& consensus() const { return consensus_; }
  const TensorPartition& partition() const { return partition_; }
  const std::vector<IterationRecord>& history() const { return history_; }
  const HyperParams& hyperparams() const { return hp_; }
  double tau() const { return tau_; }
  std::size_t iteration() const { return iteration_; }

 private:
  void evaluate(IterationRecord& rec) {
    struct Part {
      double train_ssr = 0.0, test_ssr = 0.0, lagrangian = 0.0;
    };
    std::vector<Part> parts(workers_.size());
    const bool have_test = !test_partition_.blocks.empty();
    pool_.run(workers_.size(), [&](std::size_t p) {
      const WorkerState& w = workers_[p];
      parts[p].train_ssr = sum_squared_residuals(w.block->subtensor, w.factors.A,
                                                 consensus_.B_bar, consensus_.C_bar);
      if (have_test)
        parts[p].test_ssr = sum_squared_residuals(test_partition_.blocks[p].subtensor,
                                                  w.factors.A, consensus_.B_bar,
                                                  consensus_.C_bar);
      parts[p].lagrangian = local_lagrangian(w.block->subtensor, w.factors, w.duals,
                                             consensus_.B_bar, consensus_.C_bar, hp_);
    });
    double train_ssr = 0.0, test_ssr = 0.0, obj = 0.0;
    std::size_t n_train = 0, n_test = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      train_ssr += parts[p].train_ssr;
      test_ssr += parts[p].test_ssr;
      obj += parts[p].lagrangian;
      n_train += partition_.blocks[p].subtensor.nnz();
      if (have_test) n_test += test_partition_.blocks[p].subtensor.nnz();
    }
    rec.train_rmse = n_train ? std::sqrt(train_ssr / static_cast<double>(n_train)) : 0.0;
    rec.test_rmse = n_test ? std::sqrt(test_ssr / static_cast<double>(n_test)) : std::nan("");
    rec.objective = obj;
  }

  HyperParams hp_;
  TrainOptions opt_;
  TensorPartition partition_;
  TensorPartition test_partition_;
  std::vector<WorkerState> workers_;
  ConsensusState consensus_;
  double tau_;
  std::size_t iteration_ = 0;
  std::vector<IterationRecord> history_;
  std::vector<double> train_rmse_;
  WorkerPool pool_;
};

// Runs the full parallel training loop: split, initialize, then iterate
// local pass / consensus / dual ascent until the train RMSE settles or
// max_iter is reached. `observer`, when set, sees the engine after every
// iteration.
inline TrainReport train(const SparseTemporalTensor& tensor, const SparseTemporalTensor* test,
                         const HyperParams& hp, const TrainOptions& opt,
                         const std::function<void(const Engine&)>& observer = {}) {
  Engine engine(tensor, test, hp, opt);
  TrainReport report;
  report.method = "p2t2f";
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  clock::duration excluded{};  // time spent in the observer
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    engine.step();
    const auto now = clock::now();
    IterationRecord rec = engine.history().back();
    rec.seconds = std::chrono::duration<double>(now - start - excluded).count();
    report.iterations.push_back(rec);
    if (observer) {
      observer(engine);
      excluded += clock::now() - now;
    }
    if (opt.stop_on_convergence && engine.converged()) {
      report.converged = true;
      break;
    }
  }
  report.total_seconds = report.iterations.back().seconds;
  report.A = engine.stacked_A();
  report.B = engine.consensus().B_bar;
  report.C = engine.consensus().C_bar;
  return report;
}

}  // namespace p2t2f

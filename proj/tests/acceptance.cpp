// Acceptance suite. Run with a criterion number to execute one criterion, or
// with no argument to run all of them. Prints one line per criterion:
//   criterion N [name]: PASS|FAIL|SKIP (seconds) details
// Exit code: 0 pass, 1 fail, 77 skipped.

#include <sched.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "p2t2f/p2t2f.hpp"

using namespace p2t2f;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Status::Pass : Status::Fail, std::move(detail)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Matrix gaussian(std::size_t r, std::size_t c, std::mt19937_64& gen, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(gen);
  return m;
}

SparseTemporalTensor random_tensor(Dims d, double density, std::uint64_t seed) {
  SyntheticSpec s;
  s.I = d.I;
  s.J = d.J;
  s.K = d.K;
  s.density = density;
  s.seed = seed;
  s.noise_sigma = 0.5;
  return gen_synthetic(s).tensor;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  std::mt19937_64 gen(1001);
  double worst = 0.0;
  const double h = 1e-5;
  for (int inst = 0; inst < 20; ++inst) {
    const Dims d{2 + gen() % 9, 2 + gen() % 7, 1 + gen() % 6};
    const std::size_t R = 1 + gen() % 4;
    const auto t = random_tensor(d, 0.5, gen());
    FactorSet f = init_factors(d.I, d.J, d.K, R, gen(), 1.0);
    const GradientSet g = grad_f(t, f);
    double num = 0.0, den = 0.0;
    auto check = [&](Matrix& m, const Matrix& analytic) {
      for (std::size_t n = 0; n < m.size(); ++n) {
        double& x = m.data()[n];
        const double saved = x;
        x = saved + h;
        const double up = loss_f(t, f);
        x = saved - h;
        const double down = loss_f(t, f);
        x = saved;
        const double fd = (up - down) / (2 * h);
        num += (fd - analytic.data()[n]) * (fd - analytic.data()[n]);
        den += fd * fd;
      }
    };
    check(f.A, g.dA);
    check(f.B, g.dB);
    check(f.C, g.dC);
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  return verdict(worst < 1e-6, fmt("20 instances, max relative error %.3e (< 1e-6)", worst));
}

Outcome surrogate_bound() {
  std::mt19937_64 gen(2002);
  HyperParams hp;
  const double tau = 1e-4;
  double worst_violation = -std::numeric_limits<double>::infinity();
  double worst_anchor = 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int perturbations = 0;
  for (int inst = 0; inst < 10; ++inst) {
    const Dims d{3 + gen() % 8, 3 + gen() % 6, 2 + gen() % 5};
    const std::size_t R = 1 + gen() % 4;
    const auto t = random_tensor(d, 0.4, gen());
    const FactorSet cur = init_factors(d.I, d.J, d.K, R, gen(), 0.5);
    const DualPair duals{gaussian(d.J, R, gen, 0.3), gaussian(d.K, R, gen, 0.3)};
    const Matrix Bb = gaussian(d.J, R, gen), Cb = gaussian(d.K, R, gen);
    auto L = [&](const FactorSet& f) { return local_lagrangian(t, f, duals, Bb, Cb, hp); };
    auto H = [&](const FactorSet& f) {
      return surrogate_H(f, cur, t, cur.C0, duals, Bb, Cb, tau, hp);
    };
    const double l0 = L(cur);
    worst_anchor = std::max(worst_anchor, std::abs(H(cur) - l0) / std::max(1.0, std::abs(l0)));

    for (int n = 0; n < 10; ++n, ++perturbations) {
      FactorSet cand = cur;
      std::vector<Matrix> dir{gaussian(d.I, R, gen), gaussian(d.J, R, gen), gaussian(d.K, R, gen)};
      double norm = 0.0;
      for (const auto& m : dir) norm += frobenius_sq(m);
      const double radius = 0.1 * u(gen);
      const double s = radius / std::sqrt(norm);
      Matrix* blocks[] = {&cand.A, &cand.B, &cand.C};
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t x = 0; x < dir[b].size(); ++x) blocks[b]->data()[x] += s * dir[b].data()[x];
      worst_violation = std::max(worst_violation, L(cand) - H(cand));
    }
  }
  const bool ok = worst_violation <= 1e-10 && worst_anchor <= 1e-10;
  return verdict(ok, fmt("%d perturbations, max(L - H) = %.3e (<= 1e-10), anchor gap %.3e "
                         "(<= 1e-10 relative)",
                         perturbations, worst_violation, worst_anchor));
}

// Both runs use one worker. The second takes larger steps from a larger
// start so the factors move far from initialization; tau stays below the
// inverse curvature of the data term, which the bound needs.
Outcome batch_monotonicity() {
  SyntheticSpec s;
  s.I = 50;
  s.J = 40;
  s.K = 12;
  s.rank = 5;
  s.density = 0.2;
  s.noise_sigma = 0.1;
  s.seed = 3003;
  const auto data = gen_synthetic(s).tensor;

  HyperParams defaults;
  defaults.R = 5;
  HyperParams fitting = defaults;
  fitting.tau0 = 0.003;
  fitting.alpha = 0.002;
  fitting.beta = 0.99;
  fitting.init_scale = 0.5;

  std::string detail = "200 batch iterations each;";
  bool ok = true;
  for (const auto* hp : {&defaults, &fitting}) {
    TrainOptions opt;
    opt.mode = UpdateMode::Batch;
    Engine engine(data, nullptr, *hp, opt);
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t violations = 0;
    for (int it = 0; it < 200; ++it) {
      std::optional<FactorStepTrace> trace;
      engine.step(&trace);
      const double rel = (trace->after - trace->before) / std::max(1.0, std::abs(trace->before));
      worst = std::max(worst, rel);
      if (rel > 1e-8) ++violations;
    }
    ok = ok && violations == 0;
    detail += fmt(" tau0 %g: max relative increase %.3e (<= 1e-8), %zu violations, train RMSE "
                  "%.4f;",
                  hp->tau0, worst, violations, engine.history().back().train_rmse);
  }
  detail.pop_back();
  return verdict(ok, detail);
}

Outcome dual_sum_zero() {
  SyntheticSpec s;
  s.I = 60;
  s.J = 40;
  s.K = 12;
  s.density = 0.15;
  s.noise_sigma = 0.1;
  s.seed = 4004;
  const auto data = gen_synthetic(s).tensor;
  HyperParams hp;
  hp.R = 5;
  TrainOptions opt;
  opt.workers = 4;
  opt.max_iter = 50;
  opt.stop_on_convergence = false;
  double worst = 0.0;
  std::size_t checked = 0;
  train(data, nullptr, hp, opt, [&](const Engine& e) {
    const auto ws = e.workers();
    Matrix sb(ws[0].duals.theta_B.rows(), hp.R), sc(ws[0].duals.theta_C.rows(), hp.R);
    for (const auto& w : ws) {
      for (std::size_t n = 0; n < sb.size(); ++n) sb.data()[n] += w.duals.theta_B.data()[n];
      for (std::size_t n = 0; n < sc.size(); ++n) sc.data()[n] += w.duals.theta_C.data()[n];
    }
    worst = std::max({worst, max_abs(sb), max_abs(sc)});
    ++checked;
  });
  return verdict(checked == 50 && worst < 1e-6,
                 fmt("%zu iterations at P=4, max |sum theta| = %.3e (< 1e-6)", checked, worst));
}

Outcome tridiagonal_oracle() {
  std::mt19937_64 gen(5005);
  std::uniform_real_distribution<double> u(0.01, 2.0);
  double worst = 0.0;
  const int systems = 50;
  for (int n = 0; n < systems; ++n) {
    const std::size_t K = 1 + gen() % 50, R = 1 + gen() % 5;
    const Dims d{3 + gen() % 5, 2 + gen() % 5, K};
    HyperParams hp;
    hp.R = R;
    hp.lambda_C = 5 * u(gen);
    hp.rho_C = u(gen);
    const double tau = u(gen);
    const auto t = random_tensor(d, 0.3, gen());
    const FactorSet cur = init_factors(d.I, d.J, K, R, gen(), 0.7);
    const DualPair duals{gaussian(d.J, R, gen, 0.3), gaussian(K, R, gen, 0.3)};
    const ConsensusState cs{gaussian(d.J, R, gen), gaussian(K, R, gen)};
    const Matrix C = batch_update_factors(t, cur, duals, cs, tau, hp).C;

    const GradientSet g = grad_f(t, cur);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(K, K), rhs(K, R);
    for (std::size_t k = 0; k < K; ++k) {
      Q(k, k) = 1 / tau + hp.rho_C + hp.lambda_C * (k + 1 == K ? 1.0 : 2.0);
      if (k + 1 < K) Q(k, k + 1) = Q(k + 1, k) = -hp.lambda_C;
      for (std::size_t r = 0; r < R; ++r)
        rhs(k, r) = cur.C(k, r) / tau + hp.rho_C * cs.C_bar(k, r) - duals.theta_C(k, r) -
                    g.dC(k, r) + (k == 0 ? hp.lambda_C * cur.C0(0, r) : 0.0);
    }
    const Eigen::MatrixXd ref = Q.fullPivLu().solve(rhs);
    double err = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t r = 0; r < R; ++r) err = std::max(err, std::abs(C(k, r) - ref(k, r)));
    worst = std::max(worst, err / std::max(1e-300, ref.cwiseAbs().maxCoeff()));
  }
  return verdict(worst <= 1e-10, fmt("%d systems (K <= 50), max relative deviation %.3e (<= 1e-10)",
                                     systems, worst));
}

SyntheticSpec recovery_spec() {
  SyntheticSpec s;
  s.I = 20;
  s.J = 15;
  s.K = 8;
  s.rank = 3;
  s.density = 0.4;
  s.noise_sigma = 0.0;
  s.time_smoothness = 0.3;
  s.seed = 1;
  return s;
}

HyperParams recovery_hp() {
  HyperParams hp;
  hp.R = 3;
  hp.tau0 = 0.05;
  hp.alpha = 0.01;
  hp.beta = 0.99;
  hp.init_scale = 1.0;
  hp.lambda_A = hp.lambda_B = hp.lambda_C = hp.lambda_0 = 0.001;
  return hp;
}

Outcome exact_recovery() {
  const auto data = gen_synthetic(recovery_spec()).tensor;
  TrainOptions opt;
  opt.max_iter = 300;
  opt.seed = 2;
  const auto r = train(data, nullptr, recovery_hp(), opt);
  const double final_rmse = r.last().train_rmse;
  return verdict(final_rmse < 0.05, fmt("final train RMSE %.4f (< 0.05) after %zu iterations",
                                        final_rmse, r.iteration_count()));
}

Outcome temporal_advantage() {
  std::vector<double> ours, pttf, cp;
  int wins = 0;
  for (std::uint64_t s = 0; s < 12; ++s) {
    SyntheticSpec spec;
    spec.I = spec.J = 50;
    spec.K = 100;
    spec.rank = 3;
    spec.density = 0.02;
    spec.time_smoothness = 0.05;
    spec.noise_sigma = 0.1;
    spec.seed = 100 + s;
    RatingsConfig split;
    split.split_seed = s;
    const auto [train_t, test_t] = train_test_split(gen_synthetic(spec).tensor, split);

    HyperParams hp;
    hp.R = 8;
    hp.lambda_A = hp.lambda_B = hp.lambda_0 = 0.01;
    hp.lambda_C = 0.05;
    hp.tau0 = 0.02;
    hp.beta = 0.99;
    hp.alpha = 0.004;
    hp.init_scale = 1.0;
    hp.rmse_threshold = 1e-6;
    TrainOptions opt;
    opt.max_iter = 1000;
    opt.seed = s;

    SgdParams sgd;
    sgd.R = 8;
    sgd.eta = 0.02;
    sgd.eta_decay = 0.99;
    sgd.lambda_A = sgd.lambda_B = sgd.lambda_0 = 0.01;
    sgd.lambda_C = 0.05;
    sgd.init_scale = 1.0;
    sgd.rmse_threshold = 1e-6;
    sgd.max_iter = 1000;
    sgd.seed = s;
    SgdParams cp_p = sgd;
    cp_p.lambda_C = 0.01;  // plain ridge on C

    // a diverged run scores as infinitely bad
    auto score = [](auto&& run) {
      try {
        return run().last().test_rmse;
      } catch (const DivergenceError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    ours.push_back(score([&] { return train(train_t, &test_t, hp, opt); }));
    pttf.push_back(score([&] { return pttf_sgd_train(train_t, &test_t, sgd); }));
    cp.push_back(score([&] { return cp_sgd_train(train_t, &test_t, cp_p); }));
    if (ours.back() < cp.back()) ++wins;
  }
  const double mo = median(ours), mp = median(pttf), mc = median(cp);
  return verdict(mo <= mp && mp <= mc && wins >= 10,
                 fmt("median test RMSE p2t2f %.4f <= pttf %.4f <= cp %.4f; p2t2f beats cp in "
                     "%d/12 (>= 10)",
                     mo, mp, mc, wins));
}

Outcome p_equivalence() {
  SyntheticSpec s;
  s.I = 80;
  s.J = 60;
  s.K = 20;
  s.rank = 3;
  s.density = 0.2;
  s.noise_sigma = 0.1;
  s.time_smoothness = 0.1;
  s.seed = 0;
  const auto data = gen_synthetic(s).tensor;
  HyperParams hp;
  hp.R = 3;
  hp.tau0 = 0.01;
  hp.alpha = 0.002;
  hp.beta = 0.99;
  hp.init_scale = 1.0;
  hp.rmse_threshold = 1e-6;
  TrainOptions opt;
  opt.max_iter = 2000;
  opt.seed = 0;
  opt.workers = 1;
  const auto one = train(data, nullptr, hp, opt);
  opt.workers = 4;
  const auto four = train(data, nullptr, hp, opt);
  const double a = one.last().train_rmse, b = four.last().train_rmse;
  return verdict(std::abs(a - b) < 0.01,
                 fmt("final train RMSE P=1 %.4f (%zu it), P=4 %.4f (%zu it), gap %.4f (< 0.01)", a,
                     one.iteration_count(), b, four.iteration_count(), std::abs(a - b)));
}

// Distinct (physical id, core id) pairs, capped by the CPUs this process
// may run on.
std::size_t physical_cores() {
  std::set<std::pair<int, int>> cores;
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  int phys = 0;
  while (std::getline(in, line)) {
    if (line.rfind("physical id", 0) == 0) phys = std::atoi(line.substr(line.find(':') + 1).c_str());
    if (line.rfind("core id", 0) == 0)
      cores.emplace(phys, std::atoi(line.substr(line.find(':') + 1).c_str()));
  }
  std::size_t n = cores.empty() ? std::thread::hardware_concurrency() : cores.size();
  cpu_set_t set;
  if (sched_getaffinity(0, sizeof set, &set) == 0)
    n = std::min<std::size_t>(n, static_cast<std::size_t>(CPU_COUNT(&set)));
  return n;
}

// Median wall time of one iteration over `epochs` iterations.
double median_epoch_seconds(const SparseTemporalTensor& data, const HyperParams& hp,
                            std::size_t workers, std::size_t epochs) {
  TrainOptions opt;
  opt.workers = workers;
  opt.max_iter = epochs;
  opt.stop_on_convergence = false;
  const auto r = train(data, nullptr, hp, opt);
  std::vector<double> t;
  for (std::size_t n = 0; n < r.iteration_count(); ++n) t.push_back(r.epoch_seconds(n));
  return median(t);
}

SparseTemporalTensor large_tensor(std::size_t nnz, std::uint64_t seed) {
  SyntheticSpec s;
  s.I = 4000;
  s.J = 1000;
  s.K = 50;
  s.rank = 5;
  s.density = static_cast<double>(nnz) / (4000.0 * 1000.0 * 50.0);
  s.noise_sigma = 0.1;
  s.seed = seed;
  return gen_synthetic(s).tensor;
}

Outcome speedup() {
  const std::size_t cores = physical_cores();
  const auto data = large_tensor(2'000'000, 9009);
  HyperParams hp;
  hp.R = 20;
  const double t1 = median_epoch_seconds(data, hp, 1, 5);
  const double t4 = median_epoch_seconds(data, hp, 4, 5);
  const std::string detail =
      fmt("|omega| = %zu, epoch P=1 %.3fs, P=4 %.3fs, ratio %.3f (<= 0.5), %zu physical cores",
          data.nnz(), t1, t4, t4 / t1, cores);
  if (cores < 4) return {Status::Skip, detail + " (needs >= 4)"};
  return verdict(t4 <= 0.5 * t1, detail);
}

// Sizes are large enough that both runs sit in the same memory regime; at
// 500k vs 1M entries the smaller run partly fits in cache and the ratio
// drifts above 2.5 from one run to the next.
Outcome complexity_scaling() {
  HyperParams hp;
  hp.R = 10;
  SyntheticSpec s;
  s.I = 2000;
  s.J = 1000;
  s.K = 50;
  s.rank = 5;
  s.noise_sigma = 0.1;
  s.seed = 10010;
  s.density = 2'000'000.0 / (2000.0 * 1000.0 * 50.0);
  const auto small = gen_synthetic(s).tensor;
  s.density *= 2;
  const auto big = gen_synthetic(s).tensor;
  const double a = median_epoch_seconds(small, hp, 1, 7);
  const double b = median_epoch_seconds(big, hp, 1, 7);
  const double ratio = b / a;
  return verdict(ratio >= 1.5 && ratio <= 2.5,
                 fmt("|omega| %zu -> %zu: median epoch %.4fs -> %.4fs, ratio %.3f (in [1.5, 2.5])",
                     small.nnz(), big.nnz(), a, b, ratio));
}

Outcome convergence_rule() {
  const auto data = gen_synthetic(recovery_spec()).tensor;
  HyperParams hp = recovery_hp();
  hp.rmse_threshold = 1e-4;
  TrainOptions opt;
  opt.max_iter = 1000;
  opt.seed = 2;
  const auto r = train(data, nullptr, hp, opt);
  const auto& it = r.iterations;
  if (it.size() < 2) return {Status::Fail, "fewer than two iterations"};
  bool prior_ok = true;
  for (std::size_t n = 1; n + 1 < it.size(); ++n)
    prior_ok = prior_ok && std::abs(it[n].train_rmse - it[n - 1].train_rmse) >= 1e-4;
  const double last = std::abs(it.back().train_rmse - it[it.size() - 2].train_rmse);
  return verdict(r.converged && last < 1e-4 && prior_ok && it.size() < opt.max_iter,
                 fmt("halted at iteration %zu of %zu, last delta %.3e (< 1e-4), all %zu prior "
                     "deltas >= 1e-4: %s",
                     it.size(), opt.max_iter, last, it.size() - 2, prior_ok ? "yes" : "no"));
}

Outcome movielens_smoke() {
  const char* path = std::getenv("P2T2F_MOVIELENS");
  if (path == nullptr || !std::ifstream(path))
    return {Status::Skip, "set P2T2F_MOVIELENS to a ratings.csv (userId,movieId,rating,timestamp)"};
  RatingsConfig cfg;
  const auto loaded = load_ratings(std::string(path), cfg);
  const auto [train_t, test_t] = train_test_split(loaded.tensor, cfg);
  HyperParams hp;
  hp.init_scale = 0.5;
  hp.tau0 = 0.005;
  hp.alpha = 0.0005;
  hp.beta = 0.99;
  TrainOptions opt;
  opt.max_iter = 300;
  const auto r = train(train_t, &test_t, hp, opt);
  const double rmse_test = r.last().test_rmse;
  return verdict(r.converged && rmse_test >= 0.75 && rmse_test <= 1.05,
                 fmt("%zu train ratings, converged %s after %zu iterations, test RMSE %.4f "
                     "(in [0.75, 1.05])",
                     train_t.nnz(), r.converged ? "yes" : "no", r.iteration_count(), rmse_test));
}

struct Criterion {
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"gradient oracle", gradient_oracle},
      {"surrogate bound", surrogate_bound},
      {"batch monotonicity", batch_monotonicity},
      {"dual sum zero", dual_sum_zero},
      {"tridiagonal solve oracle", tridiagonal_oracle},
      {"exact recovery", exact_recovery},
      {"temporal advantage", temporal_advantage},
      {"worker count equivalence", p_equivalence},
      {"speedup", speedup},
      {"complexity scaling", complexity_scaling},
      {"convergence rule", convergence_rule},
      {"movielens smoke (non-gating)", movielens_smoke},
  };
  return all;
}

Status run_one(std::size_t n) {
  const auto& c = criteria()[n - 1];
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {Status::Fail, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
  std::printf("criterion %zu [%s]: %s (%.1fs) %s\n", n, c.name, tag, secs, o.detail.c_str());
  std::fflush(stdout);
  return o.status;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t total = criteria().size();
  if (argc > 1) {
    const long n = std::strtol(argv[1], nullptr, 10);
    if (n < 1 || static_cast<std::size_t>(n) > total) {
      std::fprintf(stderr, "usage: %s [1..%zu]\n", argv[0], total);
      return 2;
    }
    const Status s = run_one(static_cast<std::size_t>(n));
    return s == Status::Pass ? 0 : s == Status::Skip ? 77 : 1;
  }
  bool failed = false;
  for (std::size_t n = 1; n <= total; ++n) failed |= run_one(n) == Status::Fail;
  return failed ? 1 : 0;
}

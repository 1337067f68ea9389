#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "p2t2f/admm.hpp"
#include "p2t2f/baselines.hpp"
#include "p2t2f/error.hpp"
#include "p2t2f/tensor.hpp"

namespace p2t2f {

struct SpeedupRecord {
  std::size_t workers = 1;
  double seconds = 0.0;  // time to target, or mean epoch time in epoch mode
  std::size_t iterations = 0;
  bool reached_target = false;
  double speedup = 1.0;
};

struct SpeedupReport {
  std::optional<double> target_rmse;
  bool epoch_mode = false;  // true when some run missed the target
  std::vector<SpeedupRecord> records;
};

// speedup[n] = seconds[0] / seconds[n]; the first entry is the P = 1 baseline.
inline std::vector<double> speedups(const std::vector<double>& seconds) {
  detail::require(!seconds.empty(), "speedups: no timings");
  std::vector<double> out;
  out.reserve(seconds.size());
  for (double s : seconds) {
    detail::require(s > 0, "speedups: timings must be positive");
    out.push_back(seconds.front() / s);
  }
  return out;
}

// Trains once per worker count with identical seeds. Each run is timed to
// the first iteration whose train RMSE reaches the target; if any run never
// gets there (or no target is given) every run is instead scored by its mean
// epoch time over max_iter iterations.
inline SpeedupReport bench_speedup(const SparseTemporalTensor& data, const HyperParams& hp,
                                   TrainOptions opt, std::vector<std::size_t> worker_counts,
                                   std::optional<double> target_rmse) {
  detail::require(!worker_counts.empty(), "bench_speedup: empty worker list");
  detail::require(std::ranges::find(worker_counts, 1u) != worker_counts.end(),
                  "bench_speedup: worker list must contain 1");
  // baseline first
  std::stable_partition(worker_counts.begin(), worker_counts.end(),
                        [](std::size_t p) { return p == 1; });
  worker_counts.erase(std::unique(worker_counts.begin(), worker_counts.end()),
                      worker_counts.end());

  SpeedupReport rep;
  rep.target_rmse = target_rmse;
  opt.stop_on_convergence = false;
  std::vector<TrainReport> runs;
  for (std::size_t p : worker_counts) {
    opt.workers = p;
    runs.push_back(train(data, nullptr, hp, opt));
  }

  for (std::size_t n = 0; n < runs.size(); ++n) {
    SpeedupRecord rec;
    rec.workers = worker_counts[n];
    rec.iterations = runs[n].iteration_count();
    if (target_rmse) {
      const auto& its = runs[n].iterations;
      auto hit = std::ranges::find_if(its, [&](const IterationRecord& r) {
        return r.train_rmse <= *target_rmse;
      });
      if (hit != its.end()) {
        rec.reached_target = true;
        rec.seconds = hit->seconds;
        rec.iterations = hit->iter;
      }
    }
    if (!rec.reached_target) rep.epoch_mode = true;
    rep.records.push_back(rec);
  }
  if (rep.epoch_mode) {
    for (std::size_t n = 0; n < runs.size(); ++n) {
      rep.records[n].seconds = runs[n].total_seconds / runs[n].iteration_count();
      rep.records[n].iterations = runs[n].iteration_count();
    }
  }
  std::vector<double> secs;
  for (const auto& r : rep.records) secs.push_back(r.seconds);
  const auto sp = speedups(secs);
  for (std::size_t n = 0; n < sp.size(); ++n) rep.records[n].speedup = sp[n];
  return rep;
}

inline void write_speedup_csv(std::ostream& out, const SpeedupReport& rep) {
  out << "workers,seconds,iterations,reached_target,speedup\n";
  for (const auto& r : rep.records)
    out << r.workers << ',' << r.seconds << ',' << r.iterations << ','
        << (r.reached_target ? 1 : 0) << ',' << r.speedup << '\n';
}

struct BoxplotRow {
  std::string method;
  std::uint64_t seed = 0;
  double test_rmse = 0.0;
};

// Final test RMSE of p2t2f, pttf and cp for seeds base_seed .. base_seed+n-1.
// The engine seed and the SGD seed of one row are the same value.
inline std::vector<BoxplotRow> boxplot_data(const SparseTemporalTensor& data,
                                            const SparseTemporalTensor& test,
                                            const HyperParams& hp, TrainOptions opt,
                                            SgdParams pttf, SgdParams cp, std::size_t n_seeds,
                                            std::uint64_t base_seed = 0) {
  detail::require(n_seeds >= 2, "boxplot: need at least two seeds");
  detail::require(!test.entries.empty(), "boxplot: test set is empty");
  std::vector<BoxplotRow> rows;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    opt.seed = pttf.seed = cp.seed = seed;
    rows.push_back({"p2t2f", seed, train(data, &test, hp, opt).last().test_rmse});
    rows.push_back({"pttf", seed, pttf_sgd_train(data, &test, pttf).last().test_rmse});
    rows.push_back({"cp", seed, cp_sgd_train(data, &test, cp).last().test_rmse});
  }
  return rows;
}

inline void write_boxplot_csv(std::ostream& out, const std::vector<BoxplotRow>& rows) {
  out << "method,seed,test_rmse\n";
  out.precision(17);
  for (const auto& r : rows) out << r.method << ',' << r.seed << ',' << r.test_rmse << '\n';
}

}  // namespace p2t2f

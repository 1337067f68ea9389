#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "p2t2f/matrix.hpp"

namespace p2t2f {

struct IterationRecord {
  std::size_t iter = 0;  // 1-based
  double train_rmse = 0.0;
  double test_rmse = std::nan("");  // NaN when no test set was given
  double objective = 0.0;
  double tau = 0.0;      // step size in effect during this iteration
  double seconds = 0.0;  // cumulative wall time of the iteration loop
};

struct TrainReport {
  std::string method;
  std::vector<IterationRecord> iterations;
  Matrix A;  // stacked user factors, I x R
  Matrix B;  // consensus item factors
  Matrix C;  // consensus time factors
  bool converged = false;
  double total_seconds = 0.0;

  std::size_t iteration_count() const noexcept { return iterations.size(); }
  const IterationRecord& last() const { return iterations.back(); }

  // Wall time of the i-th iteration alone.
  double epoch_seconds(std::size_t i) const {
    return iterations[i].seconds - (i == 0 ? 0.0 : iterations[i - 1].seconds);
  }
};

// True iff the last two train RMSEs differ by less than threshold.
inline bool converged(std::span<const double> history, double threshold) {
  if (history.size() < 2) return false;
  return std::abs(history[history.size() - 1] - history[history.size() - 2]) < threshold;
}

}  // namespace p2t2f

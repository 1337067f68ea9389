#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"

#include "p2t2f/error.hpp"
#include "p2t2f/report.hpp"

namespace p2t2f {

namespace detail {
// JSON has no NaN; absent metrics become null.
inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}
}  // namespace detail

// {config, iterations: [{iter, train_rmse, test_rmse, objective, tau, seconds}],
//  final: {train_rmse, test_rmse, converged, total_seconds}}
inline nlohmann::json report_to_json(const TrainReport& r, const nlohmann::json& config) {
  nlohmann::json iters = nlohmann::json::array();
  for (const auto& it : r.iterations) {
    iters.push_back({{"iter", it.iter},
                     {"train_rmse", detail::number_or_null(it.train_rmse)},
                     {"test_rmse", detail::number_or_null(it.test_rmse)},
                     {"objective", detail::number_or_null(it.objective)},
                     {"tau", it.tau},
                     {"seconds", it.seconds}});
  }
  nlohmann::json fin = {{"converged", r.converged}, {"total_seconds", r.total_seconds}};
  fin["train_rmse"] = r.iterations.empty() ? nlohmann::json(nullptr)
                                           : detail::number_or_null(r.last().train_rmse);
  fin["test_rmse"] = r.iterations.empty() ? nlohmann::json(nullptr)
                                          : detail::number_or_null(r.last().test_rmse);
  return {{"config", config}, {"iterations", std::move(iters)}, {"final", std::move(fin)}};
}

inline void write_report(const std::string& path, const TrainReport& r,
                         const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << report_to_json(r, config).dump(2) << '\n';
}

}  // namespace p2t2f

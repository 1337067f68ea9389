#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "p2t2f/error.hpp"

namespace p2t2f {

// Model and schedule parameters. Defaults follow the published experimental
// setup; lambda_0 and mu_C are not stated there and default to 0.01 and 0.
struct HyperParams {
  double lambda_A = 0.01;
  double lambda_B = 0.01;
  double lambda_C = 0.01;  // strength of the C_k ~ C_{k-1} chain
  double lambda_0 = 0.01;  // pull of C_0 toward mu_C
  double rho_B = 0.5;
  double rho_C = 0.5;
  std::vector<double> mu_C;  // empty means the zero vector
  double tau0 = 0.0005;
  double beta = 0.9;
  double alpha = 0.0001;  // floor of the tau schedule
  std::size_t R = 20;
  double rmse_threshold = 1e-4;
  double init_scale = 0.1;

  double mu(std::size_t r) const { return mu_C.empty() ? 0.0 : mu_C[r]; }

  void validate() const {
    detail::require(lambda_A >= 0 && lambda_B >= 0 && lambda_C >= 0 && lambda_0 >= 0,
                    "hyperparams: regularizers must be nonnegative");
    detail::require(rho_B >= 0 && rho_C >= 0, "hyperparams: rho must be nonnegative");
    detail::require(tau0 > 0 && alpha > 0, "hyperparams: tau0 and alpha must be positive");
    detail::require(beta > 0 && beta < 1, "hyperparams: beta must lie in (0,1)");
    detail::require(alpha <= tau0, "hyperparams: alpha must not exceed tau0");
    detail::require(R >= 1, "hyperparams: rank must be >= 1");
    detail::require(rmse_threshold > 0, "hyperparams: rmse threshold must be positive");
    detail::require(init_scale > 0, "hyperparams: init scale must be positive");
    detail::require(mu_C.empty() || mu_C.size() == R, "hyperparams: mu_C must have R entries");
  }
};

}  // namespace p2t2f

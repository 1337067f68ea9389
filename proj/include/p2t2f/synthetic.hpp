#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "p2t2f/error.hpp"
#include "p2t2f/factors.hpp"
#include "p2t2f/objective.hpp"
#include "p2t2f/tensor.hpp"

namespace p2t2f {

struct SyntheticSpec {
  std::size_t I = 100, J = 80, K = 12;
  std::size_t rank = 3;
  double density = 0.2;
  double noise_sigma = 0.0;
  double time_smoothness = 0.1;  // std dev of the random-walk step of C
  std::uint64_t seed = 0;
};

struct SyntheticData {
  SparseTemporalTensor tensor;
  FactorSet truth;  // C0 holds the walk's starting row
};

// A, B and the walk start are N(0, 1); C_k = C_{k-1} + N(0, smoothness^2).
// round(density * I*J*K) distinct cells are observed, stored in row-major
// cell order, each with N(0, noise^2) added.
inline SyntheticData gen_synthetic(const SyntheticSpec& s) {
  detail::require(s.I >= 1 && s.J >= 1 && s.K >= 1 && s.rank >= 1,
                  "gen_synthetic: sizes must be >= 1");
  detail::require(s.density > 0 && s.density <= 1, "gen_synthetic: density must lie in (0,1]");
  detail::require(s.noise_sigma >= 0 && s.time_smoothness >= 0,
                  "gen_synthetic: noise and smoothness must be nonnegative");
  const std::uint64_t cells = static_cast<std::uint64_t>(s.I) * s.J * s.K;
  const auto count = static_cast<std::uint64_t>(std::llround(s.density * static_cast<double>(cells)));
  detail::require(count >= 1, "gen_synthetic: density yields no observed cells");

  std::mt19937_64 gen(s.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  SyntheticData out;
  FactorSet& f = out.truth;
  f.A = Matrix(s.I, s.rank);
  f.B = Matrix(s.J, s.rank);
  f.C = Matrix(s.K, s.rank);
  f.C0 = Matrix(1, s.rank);
  for (double& x : f.A.data()) x = unit(gen);
  for (double& x : f.B.data()) x = unit(gen);
  for (double& x : f.C0.data()) x = unit(gen);
  for (std::size_t k = 0; k < s.K; ++k)
    for (std::size_t r = 0; r < s.rank; ++r) {
      const double prev = k == 0 ? f.C0(0, r) : f.C(k - 1, r);
      f.C(k, r) = k == 0 ? prev : prev + s.time_smoothness * unit(gen);
    }

  std::vector<std::uint64_t> chosen;
  if (count * 4 >= cells) {
    // dense regime: partial Fisher-Yates over all cells
    std::vector<std::uint64_t> all(cells);
    for (std::uint64_t c = 0; c < cells; ++c) all[c] = c;
    for (std::uint64_t n = 0; n < count; ++n) {
      std::uniform_int_distribution<std::uint64_t> pick(n, cells - 1);
      std::swap(all[n], all[pick(gen)]);
    }
    chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  } else {
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(count * 2);
    std::uniform_int_distribution<std::uint64_t> pick(0, cells - 1);
    chosen.reserve(count);
    while (chosen.size() < count) {
      const auto c = pick(gen);
      if (seen.insert(c).second) chosen.push_back(c);
    }
  }
  std::sort(chosen.begin(), chosen.end());

  out.tensor.dims = {s.I, s.J, s.K};
  out.tensor.entries.reserve(count);
  for (std::uint64_t c : chosen) {
    Entry e;
    e.k = static_cast<index_t>(c % s.K);
    e.j = static_cast<index_t>((c / s.K) % s.J);
    e.i = static_cast<index_t>(c / (static_cast<std::uint64_t>(s.K) * s.J));
    e.value = predict(f.A.row(e.i), f.B.row(e.j), f.C.row(e.k));
    if (s.noise_sigma > 0) e.value += s.noise_sigma * unit(gen);
    out.tensor.entries.push_back(e);
  }
  return out;
}

}  // namespace p2t2f

#pragma once

#include "psar/network.hpp"
#include "psar/simulate.hpp"
#include "psar/spmat.hpp"

#include <cmath>

namespace psar::testing {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

inline WeightMatrix two_cycle() { return row_normalize(Adjacency(2, {{1}, {0}})); }

inline WeightMatrix network(Generator g, Index n, std::uint64_t seed) {
  GeneratorOptions opts;
  if (g == Generator::Sbm && n < 400) opts.sbm_blocks = 4;
  return row_normalize(generate_network(g, n, seed, opts).adjacency);
}

/// Random Erdos-Renyi-like digraph on a few nodes with every out-degree >= 1.
WeightMatrix small_random(Index n, std::uint64_t seed, double prob = 0.4);

/// Simulated observed data on `w` with rho = 0.2, beta = (0.3, 0.3), sigma2 = 1.
ObservedData simulated(const WeightMatrix& w, std::uint64_t seed, double lambda2 = 0.5, double lambda2_x = 0.5,
                       double rho = 0.2);

/// Dense evaluation of one least-squares trace expression.
double dense_trace(const Matrix& wd, double rho, TraceSpec spec);

}  // namespace psar::testing

#pragma once

#include "psar/simulate.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace psar {

enum class EstimatorKind { Qmle, Cle, Cls, Ls };

EstimatorKind parse_estimator(std::string_view name);
const char* to_string(EstimatorKind kind) noexcept;

struct Diagnostics {
  bool rho_clipped = false;
  bool damped = false;
  bool sigma2_floored = false;
  bool max_iter_exceeded = false;
  int halvings = 0;
};

struct FitResult {
  EstimatorKind kind = EstimatorKind::Qmle;
  double rho = 0.0;
  Vector beta;
  std::optional<double> sigma2;  // absent for the least-squares fits
  /// Standard errors in the order (rho, beta..., sigma2 if present); empty until computed.
  Vector se;
  /// Rows of (lower, upper) matching `se`.
  Eigen::MatrixX2d ci;
  std::vector<Vector> trace;
  bool converged = false;
  int iterations = 0;
  double seconds = 0.0;
  double loglik = 0.0;  // maximized value for QMLE only
  Diagnostics diagnostics;

  Index p() const noexcept { return beta.size(); }
  Index num_params() const noexcept { return beta.size() + 1 + (sigma2 ? 1 : 0); }
  /// (rho, beta).
  Vector gamma() const;
  /// (rho, beta, sigma2); sigma2 must be present.
  Theta theta() const;
  /// Point estimates in the same order as `se`.
  Vector point() const;
};

}  // namespace psar

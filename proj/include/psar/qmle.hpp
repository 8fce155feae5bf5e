#pragma once

#include "psar/fit_result.hpp"

namespace psar {

struct QmleOptions {
  double rho_lo = -0.99;
  double rho_hi = 0.99;
  /// Distance from either end of the search interval that counts as a boundary hit.
  double boundary_tol = 1e-3;
  int max_newton = 20;
};

struct QmleFit {
  Theta theta_hat;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Gaussian SAR log-likelihood without the 2 pi constant, ignoring any noise.
double sar_loglik(const Theta& theta, const Vector& y, const Matrix& x, const WeightMatrix& w);

/// Maximizes the SAR likelihood with beta and sigma2 profiled out: a bracketed
/// search over rho followed by Newton polishing on the profile.
QmleFit fit_qmle(const ObservedData& d, const QmleOptions& opts = {});

/// Classical observed-information standard errors for (rho, beta, sigma2).
Vector qmle_standard_errors(const ObservedData& d, const Theta& theta);

/// fit_qmle wrapped as a FitResult with classical standard errors.
FitResult fit_qmle_result(const ObservedData& d, const QmleOptions& opts = {});

}  // namespace psar

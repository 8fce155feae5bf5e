#pragma once

#include "psar/fit_result.hpp"

#include <cstdint>

namespace psar {

enum class BootstrapMode {
  /// One Newton step from the estimate per bootstrap sample: delta = -J^-1 E(theta_hat; data_b).
  Linearized,
  /// Full refit on each bootstrap sample, started at the estimate.
  Refit,
};

BootstrapMode parse_bootstrap_mode(std::string_view name);
const char* to_string(BootstrapMode mode) noexcept;

struct BootstrapResult {
  Vector se;
  Matrix draws;  // one row per bootstrap sample, estimate minus point
  Index converged = 0;
};

/// Covariates for the bootstrap world. The observed columns are kept; each
/// protected block is split into its projection on the observed columns (and a
/// constant) plus a residual, and the residual is shrunk so its covariance loses
/// lambda_x^2 I. Adding fresh noise then reproduces the spread of X2*.
Matrix calibrate_covariates(const Matrix& x_star, const PrivacyConfig& privacy);

/// Parametric bootstrap from the fitted parameters with fresh model errors,
/// response noise and covariate noise. Standard errors follow the order of fit.point().
BootstrapResult bootstrap(const ObservedData& d, const FitResult& fit, Index b, std::uint64_t seed,
                          BootstrapMode mode = BootstrapMode::Linearized);

Vector bootstrap_se(const ObservedData& d, const FitResult& fit, Index b, std::uint64_t seed,
                    BootstrapMode mode = BootstrapMode::Linearized);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

/// point +/- z se with z the (1 + level)/2 normal quantile.
Interval confidence_interval(double point, double se, double level = 0.95);

/// Fills fit.ci from fit.se.
void attach_intervals(FitResult& fit, double level = 0.95);

/// sigma^4 / (N (lambda^2 + sigma^2)^2) tr(W^2 + W W') for the pure SAR model.
double pure_sar_precision_approx(const WeightMatrix& w, double sigma2, double lambda2);

}  // namespace psar

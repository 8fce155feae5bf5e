#pragma once

#include "psar/fit_result.hpp"
#include "psar/spmat.hpp"

#include <optional>

namespace psar {

/// Score and Hessian corrections of the least-squares objective, ordered (rho, beta).
struct BiasTermsCLS {
  Vector dS;
  Matrix dH;
};

/// Weight of Y_j in E(Y_i | Y_-i) under the SAR model.
double alpha_weights(const WeightMatrix& w, double rho, Index i, Index j);

/// Objective, gradient and Hessian of |d S'(S y - X beta)|^2 in gamma = (rho, beta).
struct LsDerivatives {
  double value = 0.0;
  Vector score;
  Matrix hessian;
};

enum class LsLevel { Value, Score, Full };

LsDerivatives ls_derivatives(const Vector& gamma, const Vector& y, const Matrix& x, const WeightMatrix& w,
                             LsLevel level = LsLevel::Full);

double ls_objective(const Vector& gamma, const ObservedData& d);
Vector ls_score_raw(const Vector& gamma, const ObservedData& d);
Matrix ls_hessian_raw(const Vector& gamma, const ObservedData& d);

BiasTermsCLS ls_bias_terms(const Vector& gamma, const LsTraceContext& ctx, const PrivacyConfig& privacy);
BiasTermsCLS ls_bias_terms(const Vector& gamma, const WeightMatrix& w, const PrivacyConfig& privacy);

/// Expected inflation of the objective from the privacy noise:
/// lambda^2 sum_i d_i^2 (G^2)_ii + lambda_x^2 |beta2|^2 sum_i d_i. Its gradient is
/// the score correction, so the corrected objective is ls_objective minus this.
double ls_correction(const Vector& gamma, const LsTraceContext& ctx, const PrivacyConfig& privacy);

struct ClsOptions {
  double tol = 1e-6;
  int max_iter = 200;
  double rho_clip = 0.995;
  int max_halvings = 30;
};

struct ClsState {
  Vector gamma;
  Vector score_corrected;
  Matrix hess_corrected;
  int iter = 0;
  double step_norm = 0.0;
  Diagnostics diagnostics;
  bool stalled = false;
};

/// One Newton step on the corrected objective; `corrected = false` gives plain least squares.
ClsState cls_step(const ClsState& state, const ObservedData& d, const LsTraceContext& ctx,
                  const ClsOptions& opts = {}, bool corrected = true);

/// Uncorrected least-squares minimizer, started at rho = 0 and the OLS coefficients.
FitResult fit_ls(const ObservedData& d, const ClsOptions& opts = {});

/// Corrected least squares. Starts from fit_ls unless `init` is given.
FitResult fit_cls(const ObservedData& d, const std::optional<Vector>& init = std::nullopt,
                  const ClsOptions& opts = {});

}  // namespace psar

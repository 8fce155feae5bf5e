#pragma once

#include "psar/fit_result.hpp"
#include "psar/spmat.hpp"

#include <optional>

namespace psar {

/// Score and Hessian corrections of the noisy likelihood, ordered (rho, beta, sigma2).
struct BiasTermsCLE {
  Vector dS;
  Matrix dH;

  Vector gamma_score() const { return dS.head(dS.size() - 1); }
  Matrix gamma_hessian() const { return dH.topLeftCorner(dH.rows() - 1, dH.cols() - 1); }
};

/// Data-free pieces of the noisy negative log-likelihood at a fixed theta: the
/// factorizations of S and Omega, the explicit Omega inverse and the traces the
/// derivatives need. Construction is O(N^3); each data-dependent call afterwards
/// is O(N^2 p), which is what the Monte Carlo checks and the bootstrap rely on.
class LikelihoodKernel {
 public:
  enum class Level {
    Value,      // log-determinants and Omega solves
    Objective,  // + explicit Omega inverse (corrected objective, bias of the score)
    Score,      // + tr(S^-1 W)
    Full,       // + everything the Hessian and its correction need
  };

  LikelihoodKernel(const WeightMatrix& w, const PrivacyConfig& privacy, const Theta& theta,
                   Level level = Level::Full);

  const Theta& theta() const noexcept { return theta_; }
  Level level() const noexcept { return level_; }

  double neg_loglik(const Vector& y, const Matrix& x) const;
  /// Gradient in (rho, beta, sigma2).
  Vector score(const Vector& y, const Matrix& x) const;
  /// Full (p+2) Hessian.
  Matrix hessian(const Vector& y, const Matrix& x) const;
  BiasTermsCLE bias() const;
  /// lambda_x^2 |beta2|^2 tr(Omega^-1) / 2. Its gradient is the score correction,
  /// so neg_loglik minus this is the corrected objective.
  double correction() const;

  double tr_s_inv_w() const noexcept { return tr_g_; }
  double tr_s_inv_w_sq() const noexcept { return tr_g2_; }
  double tr_omega_inv() const noexcept { return tr_m_; }
  const Matrix& omega_inverse() const noexcept { return m_; }
  double logdet_s() const noexcept { return logdet_s_; }
  double logdet_omega() const noexcept { return logdet_omega_; }

 private:
  void require(Level needed) const;
  Vector residual(const Vector& y, const Matrix& x) const;

  WeightMatrix w_;
  PrivacyConfig privacy_;
  Theta theta_;
  Level level_;
  std::optional<OmegaMatrix> omega_;
  double logdet_s_ = 0.0;
  double logdet_omega_ = 0.0;
  SpMat ws_;   // W S' + S W'
  SpMat wwt_;  // W W'
  Matrix m_;   // Omega^-1
  double tr_g_ = 0.0;
  double tr_g2_ = 0.0;
  double tr_m_ = 0.0;
  double tr_m2_ = 0.0;
  double tr_m3_ = 0.0;
  double tr_m_ws_ = 0.0;
  double tr_m_wwt_ = 0.0;
  double tr_m2_ws_ = 0.0;
  double tr_m2_wwt_ = 0.0;
  double tr_m3_ws_ = 0.0;
  double tr_mws_mws_ = 0.0;
  double tr_m2ws_mws_ = 0.0;
};

double neg_loglik(const Theta& theta, const ObservedData& d);
/// Gradient of the noisy negative log-likelihood, length p+2.
Vector score_raw(const Theta& theta, const ObservedData& d);
/// (rho, beta) block of the Hessian.
Matrix hessian_raw(const Theta& theta, const ObservedData& d);
/// Full (p+2) Hessian.
Matrix hessian_full(const Theta& theta, const ObservedData& d);
BiasTermsCLE bias_terms(const Theta& theta, const WeightMatrix& w, const PrivacyConfig& privacy);

/// N^-1 [|S y - X beta|^2 - lambda^2 tr(S S')] - lambda_x^2 |beta2|^2.
double sigma2_moment(double rho, const Vector& beta, const ObservedData& d);

struct CleOptions {
  double tol = 1e-6;
  int max_iter = 200;
  double rho_clip = 0.995;
  double sigma2_min = 1e-8;
  int max_halvings = 30;
};

struct CleState {
  Theta theta;
  Vector score_corrected;  // (rho, beta) block
  Matrix hess_corrected;
  int iter = 0;
  double step_norm = 0.0;
  Diagnostics diagnostics;
  bool stalled = false;  // damping exhausted without decreasing the corrected objective
};

/// One corrected Newton step on (rho, beta) followed by the moment update of sigma2.
CleState cle_step(const CleState& state, const ObservedData& d, const CleOptions& opts = {});

/// Iterates cle_step from `init` (QMLE when absent) until successive thetas are
/// closer than opts.tol in Euclidean norm.
FitResult fit_cle(const ObservedData& d, const std::optional<Theta>& init = std::nullopt,
                  const CleOptions& opts = {});

/// Estimating equation solved by the CLE: corrected gamma-score stacked with
/// sigma2 - sigma2_moment. Evaluated with a kernel built at theta.
Vector cle_equation(const LikelihoodKernel& k, const Vector& y, const Matrix& x, const PrivacyConfig& privacy,
                    const WeightMatrix& w);
/// Jacobian of cle_equation in (rho, beta, sigma2).
Matrix cle_equation_jacobian(const LikelihoodKernel& k, const Vector& y, const Matrix& x,
                             const PrivacyConfig& privacy, const WeightMatrix& w);

}  // namespace psar

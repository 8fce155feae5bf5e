#include "psar/qmle.hpp"
#include "psar/cle.hpp"
#include "psar/spmat.hpp"

#include <boost/math/tools/minima.hpp>

#include <chrono>
#include <cmath>

namespace psar {

double sar_loglik(const Theta& theta, const Vector& y, const Matrix& x, const WeightMatrix& w) {
  theta.validate();
  const double n = static_cast<double>(y.size());
  const Vector r = y - theta.rho * (w.matrix() * y) - x * theta.beta;
  return logdet_s(SMatrix(w, theta.rho)) - 0.5 * n * std::log(theta.sigma2) - 0.5 * r.squaredNorm() / theta.sigma2;
}

namespace {

// Profile of the SAR likelihood in rho. With e0, ew the residuals of y and Wy on X,
// sigma2(rho) = |e0 - rho ew|^2 / N.
class Profile {
 public:
  explicit Profile(const ObservedData& d) : d_(d), qr_(d.x_star) {
    if (qr_.rank() < d.x_star.cols()) throw Error(ErrorKind::RankDeficientX, "X*'X* is singular");
    wy_ = d.w.matrix() * d.y_star;
    e0_ = d.y_star - d.x_star * qr_.solve(d.y_star);
    ew_ = wy_ - d.x_star * qr_.solve(wy_);
  }

  double sigma2(double rho) const { return (e0_ - rho * ew_).squaredNorm() / n(); }

  double value(double rho) const {
    return SFactor(d_.w, rho).log_abs_det() - 0.5 * n() * std::log(sigma2(rho));
  }

  /// First and second derivatives of the profile.
  std::pair<double, double> derivatives(double rho) const {
    const SFactor f(d_.w, rho);
    const Matrix g = f.solve(d_.w.dense());
    const double tr_g = g.trace();
    const double tr_g2 = trace_of_product(g, g);
    const Vector e = e0_ - rho * ew_;
    const double q = e.squaredNorm();
    const double a = ew_.dot(e);
    const double d1 = -tr_g + n() * a / q;
    const double d2 = -tr_g2 + n() * (-ew_.squaredNorm() / q + 2.0 * a * a / (q * q));
    return {d1, d2};
  }

  Vector beta(double rho) const { return qr_.solve(Vector(d_.y_star - rho * wy_)); }

 private:
  double n() const { return static_cast<double>(d_.n()); }

  const ObservedData& d_;
  Eigen::ColPivHouseholderQR<Matrix> qr_;
  Vector wy_;
  Vector e0_;
  Vector ew_;
};

}  // namespace

QmleFit fit_qmle(const ObservedData& d, const QmleOptions& opts) {
  d.validate();
  if (d.n() <= d.p() + 2) throw Error(ErrorKind::InvalidArgument, "QMLE needs N > p + 2");
  const Profile prof(d);

  std::uintmax_t evals = 60;
  auto neg = [&](double rho) { return -prof.value(rho); };
  const auto [rho0, f0] = boost::math::tools::brent_find_minima(neg, opts.rho_lo, opts.rho_hi, 24, evals);
  (void)f0;

  QmleFit fit;
  fit.iterations = static_cast<int>(evals);
  fit.converged = evals < 60;
  double rho = rho0;
  for (int it = 0; it < opts.max_newton; ++it) {
    const auto [d1, d2] = prof.derivatives(rho);
    ++fit.iterations;
    if (!(d2 < 0.0)) break;
    const double step = -d1 / d2;
    const double cand = rho + step;
    if (!(cand > opts.rho_lo && cand < opts.rho_hi)) break;
    rho = cand;
    if (std::abs(step) < 1e-10) {
      fit.converged = true;
      break;
    }
  }
  if (rho - opts.rho_lo < opts.boundary_tol || opts.rho_hi - rho < opts.boundary_tol) {
    throw Error(ErrorKind::NoInteriorMax, "profile likelihood peaks at the rho boundary");
  }
  fit.theta_hat.rho = rho;
  fit.theta_hat.beta = prof.beta(rho);
  fit.theta_hat.sigma2 = prof.sigma2(rho);
  fit.loglik = prof.value(rho) - 0.5 * static_cast<double>(d.n());
  return fit;
}

Vector qmle_standard_errors(const ObservedData& d, const Theta& theta) {
  ObservedData plain = d;
  plain.privacy.lambda2 = 0.0;
  plain.privacy.lambda2_x = 0.0;
  const Matrix h = hessian_full(theta, plain);
  const Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success) {
    return Vector::Constant(h.rows(), std::numeric_limits<double>::quiet_NaN());
  }
  const Matrix cov = llt.solve(Matrix(Matrix::Identity(h.rows(), h.cols())));
  return cov.diagonal().cwiseSqrt();
}

FitResult fit_qmle_result(const ObservedData& d, const QmleOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const QmleFit q = fit_qmle(d, opts);
  FitResult fit;
  fit.kind = EstimatorKind::Qmle;
  fit.rho = q.theta_hat.rho;
  fit.beta = q.theta_hat.beta;
  fit.sigma2 = q.theta_hat.sigma2;
  fit.loglik = q.loglik;
  fit.converged = q.converged;
  fit.iterations = q.iterations;
  fit.trace.push_back(q.theta_hat.pack());
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fit.se = qmle_standard_errors(d, q.theta_hat);
  return fit;
}

}  // namespace psar

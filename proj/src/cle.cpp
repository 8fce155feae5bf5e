#include "psar/cle.hpp"
#include "psar/qmle.hpp"

#include <chrono>
#include <cmath>

namespace psar {

namespace {

SpMat make_ws(const WeightMatrix& w, double rho, const SpMat& wwt) {
  SpMat ws = w.matrix() + w.transpose() - 2.0 * rho * wwt;
  ws.makeCompressed();
  return ws;
}

Index protected_start(const PrivacyConfig& privacy) { return privacy.p1; }

double kappa(const PrivacyConfig& privacy, const Vector& beta) {
  if (privacy.p2 == 0) return 0.0;
  return privacy.lambda2_x * beta.tail(privacy.p2).squaredNorm();
}

}  // namespace

LikelihoodKernel::LikelihoodKernel(const WeightMatrix& w, const PrivacyConfig& privacy, const Theta& theta,
                                   Level level)
    : w_(w), privacy_(privacy), theta_(theta), level_(level) {
  theta.validate();
  if (theta.p() != privacy.p()) throw Error(ErrorKind::InvalidArgument, "theta and privacy disagree on p");
  const double rho = theta.rho;
  const double lam2 = privacy.lambda2;

  const SFactor sf(w, rho);
  if (sf.sign() <= 0) throw Error(ErrorKind::SingularSystem, "det S is not positive");
  logdet_s_ = sf.log_abs_det();
  omega_.emplace(w, rho, theta.sigma2, lam2);
  logdet_omega_ = omega_->log_det();

  wwt_ = w.matrix() * w.transpose();
  ws_ = make_ws(w, rho, wwt_);
  if (level == Level::Value) return;

  m_ = omega_->inverse();
  tr_m_ = m_.trace();
  tr_m2_ = m_.squaredNorm();
  tr_m_ws_ = trace_of_product(ws_, m_);
  tr_m_wwt_ = trace_of_product(wwt_, m_);
  if (level == Level::Objective) return;

  {
    const Matrix g = sf.solve(w.dense());
    tr_g_ = g.trace();
    if (level == Level::Full) tr_g2_ = trace_of_product(g, g);
  }
  if (level == Level::Score) return;

  const Index n = w.size();
  Matrix m2 = Matrix::Zero(n, n);
  m2.selfadjointView<Eigen::Lower>().rankUpdate(m_);
  m2.triangularView<Eigen::StrictlyUpper>() = m2.transpose();
  tr_m3_ = m2.cwiseProduct(m_).sum();
  tr_m2_ws_ = trace_of_product(ws_, m2);
  tr_m2_wwt_ = trace_of_product(wwt_, m2);
  Matrix p = m_ * ws_;
  tr_mws_mws_ = trace_of_product(p, p);
  tr_m3_ws_ = trace_of_product(m2, p);
  const Matrix q = ws_ * p;
  tr_m2ws_mws_ = trace_of_product(m2, q);
}

void LikelihoodKernel::require(Level needed) const {
  if (static_cast<int>(level_) < static_cast<int>(needed)) {
    throw Error(ErrorKind::InvalidArgument, "likelihood kernel built at too low a level");
  }
}

Vector LikelihoodKernel::residual(const Vector& y, const Matrix& x) const {
  if (y.size() != w_.size() || x.rows() != w_.size() || x.cols() != theta_.p()) {
    throw Error(ErrorKind::InvalidArgument, "data dimensions disagree with the kernel");
  }
  return y - theta_.rho * (w_.matrix() * y) - x * theta_.beta;
}

double LikelihoodKernel::neg_loglik(const Vector& y, const Matrix& x) const {
  const Vector r = residual(y, x);
  const Vector u = level_ == Level::Value ? omega_->solve(r) : Vector(m_ * r);
  return -logdet_s_ + 0.5 * logdet_omega_ + 0.5 * r.dot(u);
}

double LikelihoodKernel::correction() const {
  require(Level::Objective);
  return 0.5 * kappa(privacy_, theta_.beta) * tr_m_;
}

Vector LikelihoodKernel::score(const Vector& y, const Matrix& x) const {
  require(Level::Score);
  const Index p = theta_.p();
  const double lam2 = privacy_.lambda2;
  const Vector r = residual(y, x);
  const Vector u = m_ * r;
  const Vector r_rho = -(w_.matrix() * y);
  const Vector ws_u = ws_ * u;
  Vector s(p + 2);
  s[0] = tr_g_ - 0.5 * lam2 * tr_m_ws_ + r_rho.dot(u) + 0.5 * lam2 * u.dot(ws_u);
  s.segment(1, p) = -(x.transpose() * u);
  s[p + 1] = 0.5 * tr_m_ - 0.5 * u.squaredNorm();
  return s;
}

Matrix LikelihoodKernel::hessian(const Vector& y, const Matrix& x) const {
  require(Level::Full);
  const Index p = theta_.p();
  const double lam2 = privacy_.lambda2;
  const Vector r = residual(y, x);
  const Vector u = m_ * r;
  const Vector r_rho = -(w_.matrix() * y);
  const Vector m_r_rho = m_ * r_rho;
  const Vector ws_u = ws_ * u;
  const Vector m_ws_u = m_ * ws_u;
  const Vector m_u = m_ * u;
  const Matrix mx = m_ * x;

  Matrix h(p + 2, p + 2);
  h(0, 0) = tr_g2_ + lam2 * tr_m_wwt_ - 0.5 * lam2 * lam2 * tr_mws_mws_ + r_rho.dot(m_r_rho) +
            2.0 * lam2 * r_rho.dot(m_ws_u) + lam2 * lam2 * ws_u.dot(m_ws_u) - lam2 * u.dot(wwt_ * u);
  const Vector h_rb = -(mx.transpose() * r_rho) - lam2 * (mx.transpose() * ws_u);
  h.block(1, 0, p, 1) = h_rb;
  h.block(0, 1, 1, p) = h_rb.transpose();
  h.block(1, 1, p, p) = x.transpose() * mx;
  const double h_rs = 0.5 * lam2 * tr_m2_ws_ - r_rho.dot(m_u) - lam2 * m_u.dot(ws_u);
  h(0, p + 1) = h(p + 1, 0) = h_rs;
  const Vector h_bs = mx.transpose() * u;
  h.block(1, p + 1, p, 1) = h_bs;
  h.block(p + 1, 1, 1, p) = h_bs.transpose();
  h(p + 1, p + 1) = -0.5 * tr_m2_ + u.dot(m_u);
  return h;
}

BiasTermsCLE LikelihoodKernel::bias() const {
  const Index p = theta_.p();
  BiasTermsCLE b;
  b.dS = Vector::Zero(p + 2);
  b.dH = Matrix::Zero(p + 2, p + 2);
  const double lx2 = privacy_.lambda2_x;
  if (lx2 == 0.0 || privacy_.p2 == 0) return b;
  require(Level::Full);
  const double lam2 = privacy_.lambda2;
  const Index q0 = protected_start(privacy_);
  const Index p2 = privacy_.p2;
  const Vector beta2 = theta_.beta.tail(p2);
  const double k = kappa(privacy_, theta_.beta);

  b.dS[0] = 0.5 * lam2 * k * tr_m2_ws_;
  b.dS.segment(1 + q0, p2) = lx2 * tr_m_ * beta2;
  b.dS[p + 1] = -0.5 * k * tr_m2_;

  b.dH(0, 0) = lam2 * lam2 * k * tr_m2ws_mws_ - lam2 * k * tr_m2_wwt_;
  const Vector rb = lam2 * lx2 * tr_m2_ws_ * beta2;
  b.dH.block(1 + q0, 0, p2, 1) = rb;
  b.dH.block(0, 1 + q0, 1, p2) = rb.transpose();
  b.dH(0, p + 1) = b.dH(p + 1, 0) = -lam2 * k * tr_m3_ws_;
  b.dH.block(1 + q0, 1 + q0, p2, p2).diagonal().setConstant(lx2 * tr_m_);
  const Vector bs = -lx2 * tr_m2_ * beta2;
  b.dH.block(1 + q0, p + 1, p2, 1) = bs;
  b.dH.block(p + 1, 1 + q0, 1, p2) = bs.transpose();
  b.dH(p + 1, p + 1) = k * tr_m3_;
  return b;
}

double neg_loglik(const Theta& theta, const ObservedData& d) {
  return LikelihoodKernel(d.w, d.privacy, theta, LikelihoodKernel::Level::Value).neg_loglik(d.y_star, d.x_star);
}

Vector score_raw(const Theta& theta, const ObservedData& d) {
  return LikelihoodKernel(d.w, d.privacy, theta, LikelihoodKernel::Level::Score).score(d.y_star, d.x_star);
}

Matrix hessian_full(const Theta& theta, const ObservedData& d) {
  return LikelihoodKernel(d.w, d.privacy, theta, LikelihoodKernel::Level::Full).hessian(d.y_star, d.x_star);
}

Matrix hessian_raw(const Theta& theta, const ObservedData& d) {
  const Matrix h = hessian_full(theta, d);
  return h.topLeftCorner(h.rows() - 1, h.cols() - 1);
}

BiasTermsCLE bias_terms(const Theta& theta, const WeightMatrix& w, const PrivacyConfig& privacy) {
  const bool needed = privacy.lambda2_x > 0.0 && privacy.p2 > 0;
  if (!needed) {
    BiasTermsCLE b;
    b.dS = Vector::Zero(theta.p() + 2);
    b.dH = Matrix::Zero(theta.p() + 2, theta.p() + 2);
    return b;
  }
  return LikelihoodKernel(w, privacy, theta, LikelihoodKernel::Level::Full).bias();
}

double sigma2_moment(double rho, const Vector& beta, const ObservedData& d) {
  const Index n = d.n();
  const Vector r = d.y_star - rho * (d.w.matrix() * d.y_star) - d.x_star * beta;
  const double tr_sst = static_cast<double>(n) + rho * rho * d.w.frobenius_sq();
  return (r.squaredNorm() - d.privacy.lambda2 * tr_sst) / static_cast<double>(n) - kappa(d.privacy, beta);
}

namespace {

double corrected_objective(const ObservedData& d, const Theta& theta) {
  const LikelihoodKernel k(d.w, d.privacy, theta, LikelihoodKernel::Level::Objective);
  return k.neg_loglik(d.y_star, d.x_star) - k.correction();
}

}  // namespace

CleState cle_step(const CleState& state, const ObservedData& d, const CleOptions& opts) {
  const Theta& theta = state.theta;
  const Index p = theta.p();
  const LikelihoodKernel k(d.w, d.privacy, theta, LikelihoodKernel::Level::Full);
  const Vector score = k.score(d.y_star, d.x_star);
  const Matrix hess = k.hessian(d.y_star, d.x_star);
  const BiasTermsCLE b = k.bias();

  CleState next;
  next.iter = state.iter + 1;
  next.diagnostics = state.diagnostics;
  next.score_corrected = score.head(p + 1) - b.dS.head(p + 1);
  Matrix hc = hess.topLeftCorner(p + 1, p + 1) - b.dH.topLeftCorner(p + 1, p + 1);
  hc = 0.5 * (hc + hc.transpose()).eval();
  next.hess_corrected = hc;
  if (!hc.allFinite() || !next.score_corrected.allFinite()) {
    throw Error(ErrorKind::SingularCorrectedHessian, "non-finite corrected derivatives");
  }

  Vector gamma(p + 1);
  gamma << theta.rho, theta.beta;
  auto clip = [&](Vector g) {
    if (std::abs(g[0]) > opts.rho_clip) {
      g[0] = std::copysign(opts.rho_clip, g[0]);
      next.diagnostics.rho_clipped = true;
    }
    return g;
  };

  Vector new_gamma;
  const Eigen::LLT<Matrix> llt(hc);
  if (llt.info() == Eigen::Success) {
    new_gamma = clip(gamma - llt.solve(next.score_corrected));
  } else {
    // Indefinite: flip negative curvature, then halve until the corrected objective drops.
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hc);
    const Vector ev = eig.eigenvalues().cwiseAbs();
    const double top = ev.maxCoeff();
    if (!(top > 0.0) || ev.minCoeff() < 1e-12 * top) {
      throw Error(ErrorKind::SingularCorrectedHessian, "corrected Hessian is numerically singular");
    }
    const Vector dir =
        -(eig.eigenvectors() * (eig.eigenvectors().transpose() * next.score_corrected).cwiseQuotient(ev));
    next.diagnostics.damped = true;
    const double f0 = k.neg_loglik(d.y_star, d.x_star) - k.correction();
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings && !accepted; ++h, scale *= 0.5) {
      Vector cand = clip(gamma + scale * dir);
      Theta t = theta;
      t.rho = cand[0];
      t.beta = cand.tail(p);
      try {
        if (corrected_objective(d, t) < f0) {
          new_gamma = cand;
          accepted = true;
        }
      } catch (const Error&) {
      }
      if (!accepted) ++next.diagnostics.halvings;
    }
    if (!accepted) {
      new_gamma = gamma;
      next.stalled = true;
    }
  }

  next.theta.rho = new_gamma[0];
  next.theta.beta = new_gamma.tail(p);
  double s2 = sigma2_moment(next.theta.rho, next.theta.beta, d);
  if (!(s2 > opts.sigma2_min)) {
    s2 = opts.sigma2_min;
    next.diagnostics.sigma2_floored = true;
  }
  next.theta.sigma2 = s2;
  next.step_norm = (next.theta.pack() - theta.pack()).norm();
  return next;
}

FitResult fit_cle(const ObservedData& d, const std::optional<Theta>& init, const CleOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  d.validate();
  CleState state;
  state.theta = init ? *init : fit_qmle(d).theta_hat;

  FitResult fit;
  fit.kind = EstimatorKind::Cle;
  fit.trace.push_back(state.theta.pack());
  Theta best = state.theta;
  double best_norm = std::numeric_limits<double>::infinity();
  bool done = false;
  for (int it = 0; it < opts.max_iter && !done; ++it) {
    CleState next = cle_step(state, d, opts);
    const double norm = next.score_corrected.norm();
    if (norm < best_norm) {
      best_norm = norm;
      best = state.theta;
    }
    fit.trace.push_back(next.theta.pack());
    fit.iterations = next.iter;
    if (next.step_norm < opts.tol) {
      fit.converged = true;
      best = next.theta;
      done = true;
    } else if (next.stalled) {
      done = true;
    }
    state = std::move(next);
  }
  fit.diagnostics = state.diagnostics;
  if (!fit.converged && fit.iterations >= opts.max_iter) fit.diagnostics.max_iter_exceeded = true;

  fit.rho = best.rho;
  fit.beta = best.beta;
  fit.sigma2 = best.sigma2;
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

Vector cle_equation(const LikelihoodKernel& k, const Vector& y, const Matrix& x, const PrivacyConfig& privacy,
                    const WeightMatrix& w) {
  const Theta& t = k.theta();
  const Index p = t.p();
  Vector e = k.score(y, x) - k.bias().dS;
  ObservedData view{y, x, w, privacy};
  e[p + 1] = t.sigma2 - sigma2_moment(t.rho, t.beta, view);
  return e;
}

Matrix cle_equation_jacobian(const LikelihoodKernel& k, const Vector& y, const Matrix& x,
                             const PrivacyConfig& privacy, const WeightMatrix& w) {
  const Theta& t = k.theta();
  const Index p = t.p();
  const Index n = y.size();
  Matrix j = k.hessian(y, x) - k.bias().dH;
  const Vector wy = w.matrix() * y;
  const Vector r = y - t.rho * wy - x * t.beta;
  const double nd = static_cast<double>(n);
  j(p + 1, 0) = (2.0 * r.dot(wy) + 2.0 * privacy.lambda2 * t.rho * w.frobenius_sq()) / nd;
  Vector row_beta = 2.0 * (x.transpose() * r) / nd;
  if (privacy.p2 > 0) row_beta.tail(privacy.p2) += 2.0 * privacy.lambda2_x * t.beta.tail(privacy.p2);
  j.block(p + 1, 1, 1, p) = row_beta.transpose();
  j(p + 1, p + 1) = 1.0;
  return j;
}

}  // namespace psar

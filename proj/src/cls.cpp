#include "psar/cls.hpp"

#include <chrono>
#include <cmath>

namespace psar {

namespace {

double kappa(const PrivacyConfig& privacy, const Vector& beta) {
  if (privacy.p2 == 0) return 0.0;
  return privacy.lambda2_x * beta.tail(privacy.p2).squaredNorm();
}

std::size_t at(TraceSpec s) { return static_cast<std::size_t>(s); }

}  // namespace

double alpha_weights(const WeightMatrix& w, double rho, Index i, Index j) {
  if (i == j) throw Error(ErrorKind::InvalidArgument, "alpha weights need i != j");
  const SpMat& m = w.matrix();
  const double co_follow = m.col(i).dot(m.col(j));
  const double num = rho * (m.coeff(i, j) + m.coeff(j, i)) - rho * rho * co_follow;
  return num / (1.0 + rho * rho * w.col_sq()[i]);
}

LsDerivatives ls_derivatives(const Vector& gamma, const Vector& y, const Matrix& x, const WeightMatrix& w,
                             LsLevel level) {
  const Index p = x.cols();
  if (gamma.size() != p + 1 || y.size() != w.size() || x.rows() != w.size()) {
    throw Error(ErrorKind::InvalidArgument, "least-squares dimension mismatch");
  }
  const double rho = gamma[0];
  const auto beta = gamma.tail(p);
  const DRho<double> d = d_rho_family(w, rho);
  const auto& dg = d.diag.array();

  const Vector wy = w.matrix() * y;
  const Vector r = y - rho * wy - x * beta;
  const Vector wt_r = w.transpose() * r;
  const Vector st_r = r - rho * wt_r;
  const Vector v = (dg * st_r.array()).matrix();

  LsDerivatives out;
  out.value = v.squaredNorm();
  if (level == LsLevel::Value) return out;

  const Vector wtwy = w.transpose() * wy;
  const Vector st_wy = wy - rho * wtwy;
  const Vector v_rho = (d.ddiag.array() * st_r.array() - dg * wt_r.array() - dg * st_wy.array()).matrix();
  const Matrix wt_x = w.transpose() * x;
  const Matrix st_x = x - rho * wt_x;
  const Matrix v_beta = -(d.diag.asDiagonal() * st_x);

  out.score.resize(p + 1);
  out.score[0] = 2.0 * v.dot(v_rho);
  out.score.tail(p) = 2.0 * (v_beta.transpose() * v);
  if (level == LsLevel::Score) return out;

  const Vector v_rr = (d.dddiag.array() * st_r.array() - 2.0 * d.ddiag.array() * (wt_r + st_wy).array() +
                       2.0 * dg * wtwy.array())
                          .matrix();
  const Matrix v_rb = -(d.ddiag.asDiagonal() * st_x) + d.diag.asDiagonal() * wt_x;
  out.hessian.resize(p + 1, p + 1);
  out.hessian(0, 0) = 2.0 * (v_rho.squaredNorm() + v.dot(v_rr));
  const Vector h_rb = 2.0 * (v_beta.transpose() * v_rho + v_rb.transpose() * v);
  out.hessian.block(1, 0, p, 1) = h_rb;
  out.hessian.block(0, 1, 1, p) = h_rb.transpose();
  out.hessian.block(1, 1, p, p) = 2.0 * (v_beta.transpose() * v_beta);
  return out;
}

double ls_objective(const Vector& gamma, const ObservedData& d) {
  return ls_derivatives(gamma, d.y_star, d.x_star, d.w, LsLevel::Value).value;
}

Vector ls_score_raw(const Vector& gamma, const ObservedData& d) {
  return ls_derivatives(gamma, d.y_star, d.x_star, d.w, LsLevel::Score).score;
}

Matrix ls_hessian_raw(const Vector& gamma, const ObservedData& d) {
  return ls_derivatives(gamma, d.y_star, d.x_star, d.w, LsLevel::Full).hessian;
}

BiasTermsCLS ls_bias_terms(const Vector& gamma, const LsTraceContext& ctx, const PrivacyConfig& privacy) {
  const Index p = gamma.size() - 1;
  if (p != privacy.p()) throw Error(ErrorKind::InvalidArgument, "gamma and privacy disagree on p");
  BiasTermsCLS b;
  b.dS = Vector::Zero(p + 1);
  b.dH = Matrix::Zero(p + 1, p + 1);
  if (privacy.noiseless()) return b;

  const double rho = gamma[0];
  const Vector beta = gamma.tail(p);
  const double l2 = privacy.lambda2;
  const double lx2 = privacy.p2 > 0 ? privacy.lambda2_x : 0.0;
  const double k = kappa(privacy, beta);
  const auto t = ctx.evaluate(rho);
  using T = TraceSpec;

  b.dS[0] = 2.0 * l2 * (t[at(T::GG_D_Dd)] - t[at(T::G_DD_Wb)]) + 2.0 * k * (t[at(T::G_D_Dd)] - t[at(T::S_DD_Wt)]);
  b.dH(0, 0) = 2.0 * l2 *
                   (t[at(T::Wb_DD_Wb)] + 2.0 * t[at(T::G_DD_WtW)] - 4.0 * t[at(T::Wb_D_Dd_G)] +
                    t[at(T::GG_DdDd_DDdd)]) +
               2.0 * k * (t[at(T::WtW_DD)] - 4.0 * t[at(T::W_D_Dd_St)] + t[at(T::G_DdDd_DDdd)]);
  if (privacy.p2 > 0 && lx2 > 0.0) {
    const Index q0 = privacy.p1;
    const Index p2 = privacy.p2;
    const Vector beta2 = beta.tail(p2);
    b.dS.segment(1 + q0, p2) = 2.0 * lx2 * t[at(T::G_DD)] * beta2;
    const Vector rb = 4.0 * lx2 * (t[at(T::S_D_Dd_St)] - t[at(T::W_DD_St)]) * beta2;
    b.dH.block(1 + q0, 0, p2, 1) = rb;
    b.dH.block(0, 1 + q0, 1, p2) = rb.transpose();
    b.dH.block(1 + q0, 1 + q0, p2, p2).diagonal().setConstant(2.0 * lx2 * t[at(T::S_DD_St)]);
  }
  return b;
}

BiasTermsCLS ls_bias_terms(const Vector& gamma, const WeightMatrix& w, const PrivacyConfig& privacy) {
  return ls_bias_terms(gamma, LsTraceContext(w), privacy);
}

double ls_correction(const Vector& gamma, const LsTraceContext& ctx, const PrivacyConfig& privacy) {
  const double rho = gamma[0];
  const Vector beta = gamma.tail(gamma.size() - 1);
  const DRho<double> d = d_rho_family<double>(ctx.col_sq(), rho);
  const double dd_g2 = d.diag.cwiseProduct(d.diag).dot(ctx.g2_diag(rho));
  return privacy.lambda2 * dd_g2 + kappa(privacy, beta) * d.diag.sum();
}

namespace {

double corrected_ls_objective(const Vector& gamma, const ObservedData& d, const LsTraceContext& ctx,
                              bool corrected) {
  const double v = ls_objective(gamma, d);
  return corrected ? v - ls_correction(gamma, ctx, d.privacy) : v;
}

}  // namespace

ClsState cls_step(const ClsState& state, const ObservedData& d, const LsTraceContext& ctx, const ClsOptions& opts,
                  bool corrected) {
  const Vector& gamma = state.gamma;
  const LsDerivatives raw = ls_derivatives(gamma, d.y_star, d.x_star, d.w, LsLevel::Full);

  ClsState next;
  next.iter = state.iter + 1;
  next.diagnostics = state.diagnostics;
  next.score_corrected = raw.score;
  Matrix hc = raw.hessian;
  if (corrected) {
    const BiasTermsCLS b = ls_bias_terms(gamma, ctx, d.privacy);
    next.score_corrected -= b.dS;
    hc -= b.dH;
  }
  hc = 0.5 * (hc + hc.transpose()).eval();
  next.hess_corrected = hc;
  if (!hc.allFinite() || !next.score_corrected.allFinite()) {
    throw Error(ErrorKind::SingularCorrectedHessian, "non-finite corrected derivatives");
  }

  auto clip = [&](Vector g) {
    if (std::abs(g[0]) > opts.rho_clip) {
      g[0] = std::copysign(opts.rho_clip, g[0]);
      next.diagnostics.rho_clipped = true;
    }
    return g;
  };

  const Eigen::LLT<Matrix> llt(hc);
  if (llt.info() == Eigen::Success) {
    next.gamma = clip(gamma - llt.solve(next.score_corrected));
  } else {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(hc);
    const Vector ev = eig.eigenvalues().cwiseAbs();
    const double top = ev.maxCoeff();
    if (!(top > 0.0) || ev.minCoeff() < 1e-12 * top) {
      throw Error(ErrorKind::SingularCorrectedHessian, "corrected Hessian is numerically singular");
    }
    const Vector dir =
        -(eig.eigenvectors() * (eig.eigenvectors().transpose() * next.score_corrected).cwiseQuotient(ev));
    next.diagnostics.damped = true;
    const double f0 = corrected_ls_objective(gamma, d, ctx, corrected);
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings && !accepted; ++h, scale *= 0.5) {
      const Vector cand = clip(gamma + scale * dir);
      if (corrected_ls_objective(cand, d, ctx, corrected) < f0) {
        next.gamma = cand;
        accepted = true;
      } else {
        ++next.diagnostics.halvings;
      }
    }
    if (!accepted) {
      next.gamma = gamma;
      next.stalled = true;
    }
  }
  next.step_norm = (next.gamma - gamma).norm();
  return next;
}

namespace {

FitResult iterate_ls(const ObservedData& d, const LsTraceContext& ctx, Vector gamma, const ClsOptions& opts,
                     bool corrected, FitResult fit) {
  ClsState state;
  state.gamma = std::move(gamma);
  state.diagnostics = fit.diagnostics;
  fit.trace.push_back(state.gamma);
  Vector best = state.gamma;
  double best_norm = std::numeric_limits<double>::infinity();
  bool done = false;
  int iters = 0;
  for (int it = 0; it < opts.max_iter && !done; ++it) {
    ClsState next = cls_step(state, d, ctx, opts, corrected);
    const double norm = next.score_corrected.norm();
    if (norm < best_norm) {
      best_norm = norm;
      best = state.gamma;
    }
    fit.trace.push_back(next.gamma);
    iters = next.iter;
    if (next.step_norm < opts.tol) {
      fit.converged = true;
      best = next.gamma;
      done = true;
    } else if (next.stalled) {
      done = true;
    }
    state = std::move(next);
  }
  fit.iterations += iters;
  fit.diagnostics = state.diagnostics;
  if (!fit.converged && iters >= opts.max_iter) fit.diagnostics.max_iter_exceeded = true;
  fit.rho = best[0];
  fit.beta = best.tail(best.size() - 1);
  fit.sigma2.reset();
  return fit;
}

Vector ols_start(const ObservedData& d) {
  const Eigen::ColPivHouseholderQR<Matrix> qr(d.x_star);
  if (qr.rank() < d.x_star.cols()) throw Error(ErrorKind::RankDeficientX, "X*'X* is singular");
  Vector g(d.p() + 1);
  g << 0.0, qr.solve(d.y_star);
  return g;
}

}  // namespace

FitResult fit_ls(const ObservedData& d, const ClsOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  d.validate();
  const LsTraceContext ctx(d.w);
  FitResult fit;
  fit.kind = EstimatorKind::Ls;
  fit = iterate_ls(d, ctx, ols_start(d), opts, false, std::move(fit));
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

FitResult fit_cls(const ObservedData& d, const std::optional<Vector>& init, const ClsOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  d.validate();
  const LsTraceContext ctx(d.w);
  FitResult fit;
  fit.kind = EstimatorKind::Cls;
  Vector gamma;
  if (init) {
    gamma = *init;
  } else {
    const FitResult ls = iterate_ls(d, ctx, ols_start(d), opts, false, FitResult{});
    gamma = ls.gamma();
    fit.iterations = ls.iterations;
  }
  fit = iterate_ls(d, ctx, std::move(gamma), opts, true, std::move(fit));
  fit.kind = EstimatorKind::Cls;
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

}  // namespace psar

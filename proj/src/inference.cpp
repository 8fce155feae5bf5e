#include "psar/inference.hpp"
#include "psar/cle.hpp"
#include "psar/cls.hpp"
#include "psar/qmle.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <functional>
#include <limits>

namespace psar {

EstimatorKind parse_estimator(std::string_view name) {
  if (name == "qmle") return EstimatorKind::Qmle;
  if (name == "cle") return EstimatorKind::Cle;
  if (name == "cls") return EstimatorKind::Cls;
  if (name == "ls") return EstimatorKind::Ls;
  throw Error(ErrorKind::UnknownSpec, "estimator '" + std::string(name) + "'");
}

const char* to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::Qmle: return "qmle";
    case EstimatorKind::Cle: return "cle";
    case EstimatorKind::Cls: return "cls";
    case EstimatorKind::Ls: return "ls";
  }
  return "?";
}

Vector FitResult::gamma() const {
  Vector g(beta.size() + 1);
  g << rho, beta;
  return g;
}

Theta FitResult::theta() const {
  if (!sigma2) throw Error(ErrorKind::InvalidArgument, "fit carries no sigma2");
  Theta t;
  t.rho = rho;
  t.beta = beta;
  t.sigma2 = *sigma2;
  return t;
}

Vector FitResult::point() const {
  Vector v(num_params());
  v.head(beta.size() + 1) = gamma();
  if (sigma2) v[v.size() - 1] = *sigma2;
  return v;
}

BootstrapMode parse_bootstrap_mode(std::string_view name) {
  if (name == "linearized") return BootstrapMode::Linearized;
  if (name == "refit") return BootstrapMode::Refit;
  throw Error(ErrorKind::UnknownSpec, "bootstrap mode '" + std::string(name) + "'");
}

const char* to_string(BootstrapMode mode) noexcept {
  return mode == BootstrapMode::Linearized ? "linearized" : "refit";
}

Matrix calibrate_covariates(const Matrix& x_star, const PrivacyConfig& privacy) {
  Matrix x = x_star;
  if (privacy.p2 == 0 || privacy.lambda2_x == 0.0) return x;
  const Index n = x.rows();
  const Index p1 = privacy.p1;
  const Index p2 = privacy.p2;
  Matrix basis(n, p1 + 1);
  basis.col(0).setOnes();
  basis.rightCols(p1) = x.leftCols(p1);
  const Eigen::ColPivHouseholderQR<Matrix> qr(basis);
  const Matrix prot = x.rightCols(p2);
  const Matrix fitted = basis * qr.solve(prot);
  const Matrix resid = prot - fitted;
  const Matrix cov = resid.transpose() * resid / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Vector shrink(p2);
  for (Index k = 0; k < p2; ++k) {
    const double ev = eig.eigenvalues()[k];
    shrink[k] = ev > 0.0 ? std::sqrt(std::max(ev - privacy.lambda2_x, 0.01 * ev) / ev) : 1.0;
  }
  const Matrix t = eig.eigenvectors() * shrink.asDiagonal() * eig.eigenvectors().transpose();
  x.rightCols(p2) = fitted + resid * t;
  return x;
}

namespace {

struct World {
  const WeightMatrix& w;
  const PrivacyConfig& privacy;
  double rho;
  Vector mean_rhs;  // X~ beta
  Matrix x_tilde;
  double sigma2;
};

void draw_world(const World& world, std::uint64_t seed, Vector& y, Matrix& x) {
  Rng rng = make_rng(seed);
  const Index n = world.x_tilde.rows();
  const Vector e = draw_noise(n, world.sigma2, world.privacy.law, rng);
  y = solve_s(world.w, world.rho, world.mean_rhs + e);
  if (world.privacy.lambda2 > 0.0) y += draw_noise(n, world.privacy.lambda2, world.privacy.law, rng);
  x = world.x_tilde;
  if (world.privacy.lambda2_x > 0.0) {
    for (Index j = world.privacy.p1; j < world.privacy.p1 + world.privacy.p2; ++j) {
      x.col(j) += draw_noise(n, world.privacy.lambda2_x, NoiseLaw::Normal, rng);
    }
  }
}

Vector column_sd(const Matrix& draws) {
  const Index b = draws.rows();
  const Vector mean = draws.colwise().mean().transpose();
  return ((draws.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / static_cast<double>(b - 1))
      .cwiseSqrt();
}

}  // namespace

BootstrapResult bootstrap(const ObservedData& d, const FitResult& fit, Index b, std::uint64_t seed,
                          BootstrapMode mode) {
  if (b < 2) throw Error(ErrorKind::InvalidArgument, "bootstrap needs at least two samples");
  d.validate();
  const Index p = d.p();
  const Index k = fit.num_params();
  double sigma2 = fit.sigma2 ? *fit.sigma2 : sigma2_moment(fit.rho, fit.beta, d);
  sigma2 = std::max(sigma2, 1e-8);

  World world{d.w, d.privacy, fit.rho, {}, calibrate_covariates(d.x_star, d.privacy), sigma2};
  world.mean_rhs = world.x_tilde * fit.beta;

  BootstrapResult out;
  out.draws.resize(b, k);
  Vector y;
  Matrix x;

  if (mode == BootstrapMode::Linearized) {
    // Estimating equation E and its Jacobian J at the estimate, on the observed data.
    std::function<Vector(const Vector&, const Matrix&)> equation;
    Matrix jac;
    std::optional<LikelihoodKernel> kernel;
    std::optional<LsTraceContext> ctx;
    Vector ls_shift;
    switch (fit.kind) {
      case EstimatorKind::Cle: {
        kernel.emplace(d.w, d.privacy, fit.theta(), LikelihoodKernel::Level::Full);
        jac = cle_equation_jacobian(*kernel, d.y_star, d.x_star, d.privacy, d.w);
        equation = [&](const Vector& yy, const Matrix& xx) {
          return cle_equation(*kernel, yy, xx, d.privacy, d.w);
        };
        break;
      }
      case EstimatorKind::Qmle: {
        PrivacyConfig plain = d.privacy;
        plain.lambda2 = 0.0;
        plain.lambda2_x = 0.0;
        kernel.emplace(d.w, plain, fit.theta(), LikelihoodKernel::Level::Full);
        jac = kernel->hessian(d.y_star, d.x_star);
        equation = [&](const Vector& yy, const Matrix& xx) { return kernel->score(yy, xx); };
        break;
      }
      case EstimatorKind::Cls:
      case EstimatorKind::Ls: {
        const Vector gamma = fit.gamma();
        ctx.emplace(d.w);
        jac = ls_derivatives(gamma, d.y_star, d.x_star, d.w, LsLevel::Full).hessian;
        ls_shift = Vector::Zero(p + 1);
        if (fit.kind == EstimatorKind::Cls) {
          const BiasTermsCLS bt = ls_bias_terms(gamma, *ctx, d.privacy);
          jac -= bt.dH;
          ls_shift = bt.dS;
        }
        equation = [&, gamma](const Vector& yy, const Matrix& xx) {
          return Vector(ls_derivatives(gamma, yy, xx, d.w, LsLevel::Score).score - ls_shift);
        };
        break;
      }
    }
    const Eigen::FullPivLU<Matrix> lu(jac);
    if (!lu.isInvertible()) throw Error(ErrorKind::SingularCorrectedHessian, "bootstrap Jacobian is singular");
    for (Index s = 0; s < b; ++s) {
      draw_world(world, split_seed(seed, static_cast<std::uint64_t>(s), 0), y, x);
      out.draws.row(s) = (-lu.solve(equation(y, x))).transpose();
    }
    out.converged = b;
  } else {
    const Vector point = fit.point();
    Index row = 0;
    for (Index s = 0; s < b; ++s) {
      draw_world(world, split_seed(seed, static_cast<std::uint64_t>(s), 0), y, x);
      const ObservedData db{y, x, d.w, d.privacy};
      FitResult f;
      try {
        switch (fit.kind) {
          case EstimatorKind::Cle: f = fit_cle(db, fit.theta()); break;
          case EstimatorKind::Cls: f = fit_cls(db, fit.gamma()); break;
          case EstimatorKind::Qmle: f = fit_qmle_result(db); break;
          case EstimatorKind::Ls: f = fit_ls(db); break;
        }
      } catch (const Error&) {
        continue;
      }
      if (!f.converged) continue;
      out.draws.row(row++) = (f.point() - point).transpose();
    }
    out.converged = row;
    if (row < static_cast<Index>(std::ceil(0.9 * static_cast<double>(b)))) {
      throw Error(ErrorKind::TooFewConverged,
                  std::to_string(row) + " of " + std::to_string(b) + " bootstrap refits converged");
    }
    out.draws.conservativeResize(row, k);
  }
  out.se = column_sd(out.draws);
  return out;
}

Vector bootstrap_se(const ObservedData& d, const FitResult& fit, Index b, std::uint64_t seed, BootstrapMode mode) {
  return bootstrap(d, fit, b, seed, mode).se;
}

Interval confidence_interval(double point, double se, double level) {
  if (level <= 0.0) return {point, point};
  const boost::math::normal_distribution<double> norm;
  const double z = boost::math::quantile(norm, 0.5 * (1.0 + level));
  return {point - z * se, point + z * se};
}

void attach_intervals(FitResult& fit, double level) {
  const Vector pt = fit.point();
  fit.ci.resize(fit.se.size(), 2);
  for (Index k = 0; k < fit.se.size(); ++k) {
    const Interval iv = confidence_interval(pt[k], fit.se[k], level);
    fit.ci(k, 0) = iv.lower;
    fit.ci(k, 1) = iv.upper;
  }
}

double pure_sar_precision_approx(const WeightMatrix& w, double sigma2, double lambda2) {
  const double n = static_cast<double>(w.size());
  const double tr_w2 = w.matrix().cwiseProduct(w.transpose()).sum();
  const double tr_wwt = w.frobenius_sq();
  const double s = sigma2 + lambda2;
  return sigma2 * sigma2 / (n * s * s) * (tr_w2 + tr_wwt);
}

}  // namespace psar

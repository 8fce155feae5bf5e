#include "psar/simulate.hpp"
#include "psar/spmat.hpp"

#include <cmath>

namespace psar {

void Theta::validate() const {
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorKind::InvalidArgument, "|rho| must be below 1");
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma2 must be positive");
}

Vector Theta::pack() const {
  Vector v(beta.size() + 2);
  v << rho, beta, sigma2;
  return v;
}

Theta Theta::unpack(const Vector& v) {
  Theta t;
  t.rho = v[0];
  t.beta = v.segment(1, v.size() - 2);
  t.sigma2 = v[v.size() - 1];
  return t;
}

void PrivacyConfig::validate(Index p) const {
  if (lambda2 < 0.0 || lambda2_x < 0.0) throw Error(ErrorKind::InvalidArgument, "noise variances must be >= 0");
  if (p1 < 0 || p2 < 0 || p1 + p2 != p) {
    throw Error(ErrorKind::InvalidArgument, "p1 + p2 must equal the number of covariates");
  }
}

void ObservedData::validate() const {
  if (x_star.rows() != y_star.size() || w.size() != y_star.size()) {
    throw Error(ErrorKind::InvalidArgument, "data dimensions disagree");
  }
  privacy.validate(x_star.cols());
}

Vector draw_noise(Index n, double variance, NoiseLaw law, Rng& rng) {
  Vector v(n);
  const double sd = std::sqrt(variance);
  for (Index i = 0; i < n; ++i) v[i] = sd * draw_unit(rng, law);
  return v;
}

Matrix gen_covariates(Index n, Index p, std::uint64_t seed) {
  if (n < 1 || p < 1) throw Error(ErrorKind::InvalidArgument, "covariates need n, p >= 1");
  Rng rng = make_rng(seed);
  Matrix x(n, p);
  // Row-major fill so that row i depends only on the first i rows of draws.
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) x(i, j) = draw_unit(rng, NoiseLaw::Normal);
  }
  return x;
}

TrueData simulate_sar_with_errors(const WeightMatrix& w, const Theta& theta, const Matrix& x, Vector e) {
  theta.validate();
  if (x.rows() != w.size() || x.cols() != theta.p() || e.size() != w.size()) {
    throw Error(ErrorKind::InvalidArgument, "simulate_sar dimension mismatch");
  }
  TrueData t;
  const Vector rhs = x * theta.beta + e;
  t.y = solve_s(w, theta.rho, rhs);
  t.x = x;
  t.w = w;
  t.e = std::move(e);
  return t;
}

TrueData simulate_sar(const WeightMatrix& w, const Theta& theta, const Matrix& x, std::uint64_t seed,
                      NoiseLaw law) {
  Rng rng = make_rng(seed);
  return simulate_sar_with_errors(w, theta, x, draw_noise(w.size(), theta.sigma2, law, rng));
}

ObservedData add_privacy_noise(const TrueData& t, const PrivacyConfig& cfg, std::uint64_t seed) {
  cfg.validate(t.x.cols());
  ObservedData d;
  d.w = t.w;
  d.privacy = cfg;
  d.y_star = t.y;
  d.x_star = t.x;
  const Index n = t.y.size();
  if (cfg.lambda2 > 0.0) {
    Rng rng = make_rng(split_seed(seed, 0, 0));
    d.y_star += draw_noise(n, cfg.lambda2, cfg.law, rng);
  }
  if (cfg.lambda2_x > 0.0 && cfg.p2 > 0) {
    Rng rng = make_rng(split_seed(seed, 0, 1));
    for (Index j = cfg.p1; j < cfg.p1 + cfg.p2; ++j) {
      d.x_star.col(j) += draw_noise(n, cfg.lambda2_x, NoiseLaw::Normal, rng);
    }
  }
  return d;
}

}  // namespace psar

#include "helpers.hpp"
#include "psar/cls.hpp"

#include <doctest.h>

using namespace psar;
using testing::rel_err;

TEST_CASE("conditional-expectation weights") {
  const WeightMatrix c2 = testing::two_cycle();
  CHECK(alpha_weights(c2, 0.0, 0, 1) == 0.0);
  for (double rho : {-0.4, 0.3, 0.8}) CHECK(alpha_weights(c2, rho, 0, 1) == doctest::Approx(2 * rho / (1 + rho * rho)));
  // 0 -> 1 -> 2 -> 0 and 3 <-> 4: nodes 0 and 3 share nothing.
  const WeightMatrix w = row_normalize(Adjacency(5, {{1}, {2}, {0}, {4}, {3}}));
  CHECK(alpha_weights(w, 0.5, 0, 3) == 0.0);
}

TEST_CASE("least-squares objective equals the conditional-expectation sum") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Index n = 5 + static_cast<Index>(seed % 6);
    const WeightMatrix w = testing::small_random(n, seed, 0.35);
    const ObservedData d = testing::simulated(w, seed);
    Vector gamma(3);
    gamma << 0.3 - 0.05 * static_cast<double>(seed), 0.2, -0.1;
    const double rho = gamma[0];
    const Matrix s = Matrix::Identity(n, n) - rho * w.dense();
    const Vector mu = s.partialPivLu().solve(d.x_star * gamma.tail(2));
    double direct = 0.0;
    for (Index i = 0; i < n; ++i) {
      double cond = mu[i];
      for (Index j = 0; j < n; ++j) {
        if (j != i) cond += alpha_weights(w, rho, i, j) * (d.y_star[j] - mu[j]);
      }
      direct += (d.y_star[i] - cond) * (d.y_star[i] - cond);
    }
    CHECK(rel_err(ls_objective(gamma, d), direct) <= 1e-9);
  }
}

TEST_CASE("objective basics") {
  const WeightMatrix w = testing::network(Generator::Dyad, 100, 1);
  ObservedData d = testing::simulated(w, 2, 0.0, 0.0);
  Vector gamma(3);
  gamma << 0.2, 0.3, 0.3;
  // No error at all: y = S^-1 X beta.
  ObservedData exact = d;
  exact.y_star = solve_s(w, 0.2, d.x_star * gamma.tail(2));
  CHECK(ls_objective(gamma, exact) <= 1e-20);
  ObservedData twice = d;
  twice.y_star *= 2.0;
  twice.x_star *= 2.0;
  CHECK(ls_objective(gamma, twice) == doctest::Approx(4.0 * ls_objective(gamma, d)).epsilon(1e-12));
}

TEST_CASE("rho = 0 gives the OLS gradient and Hessian") {
  const WeightMatrix w = testing::network(Generator::Sbm, 120, 3);
  const ObservedData d = testing::simulated(w, 4);
  Vector gamma(3);
  gamma << 0.0, 0.1, 0.4;
  const Vector r = d.y_star - d.x_star * gamma.tail(2);
  CHECK(rel_err(Matrix(ls_score_raw(gamma, d).tail(2)), Matrix(-2.0 * d.x_star.transpose() * r)) <= 1e-12);
  const Matrix h = ls_hessian_raw(gamma, d);
  CHECK(rel_err(Matrix(h.bottomRightCorner(2, 2)), Matrix(2.0 * d.x_star.transpose() * d.x_star)) <= 1e-12);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("bias terms") {
  const WeightMatrix w = testing::network(Generator::Dyad, 100, 5);
  Vector gamma(3);
  gamma << 0.25, 0.3, 0.45;
  const auto zero = ls_bias_terms(gamma, w, {0.0, 0.0, 1, 1, NoiseLaw::Normal});
  CHECK(zero.dS.isZero(0.0));
  CHECK(zero.dH.isZero(0.0));

  Vector g0 = gamma;
  g0[0] = 0.0;
  const auto at0 = ls_bias_terms(g0, w, {0.5, 0.3, 1, 1, NoiseLaw::Normal});
  CHECK(at0.dS[1] == 0.0);
  CHECK(at0.dS[2] == doctest::Approx(2 * 0.3 * static_cast<double>(w.size()) * 0.45).epsilon(1e-12));
}

TEST_CASE("least-squares corrections are derivatives of the correction potential") {
  const WeightMatrix w = testing::network(Generator::PowerLaw, 100, 6);
  const LsTraceContext ctx(w);
  const PrivacyConfig privacy{0.7, 0.5, 1, 1, NoiseLaw::Normal};
  Vector gamma(3);
  gamma << 0.4, -0.2, 0.6;
  const auto b = ls_bias_terms(gamma, ctx, privacy);
  CHECK((b.dH - b.dH.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  const double h = 1e-5;
  for (Index k = 0; k < 3; ++k) {
    Vector up = gamma, dn = gamma;
    up[k] += h;
    dn[k] -= h;
    const double fd = (ls_correction(up, ctx, privacy) - ls_correction(dn, ctx, privacy)) / (2 * h);
    CHECK(rel_err(fd, b.dS[k]) <= 1e-6);
    const Vector dfd = (ls_bias_terms(up, ctx, privacy).dS - ls_bias_terms(dn, ctx, privacy).dS) / (2 * h);
    CHECK(rel_err(Matrix(dfd), Matrix(b.dH.col(k))) <= 1e-5);
  }
}

TEST_CASE("CLS equals uncorrected least squares without noise") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const WeightMatrix w = testing::network(Generator::Dyad, 300, seed);
    const ObservedData d = testing::simulated(w, seed + 20, 0.0, 0.0);
    const FitResult ls = fit_ls(d);
    const FitResult cls = fit_cls(d);
    REQUIRE(ls.converged);
    REQUIRE(cls.converged);
    CHECK((ls.gamma() - cls.gamma()).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(ls_score_raw(ls.gamma(), d).norm() <= 1e-5 * static_cast<double>(d.n()));
    CHECK_FALSE(cls.sigma2.has_value());
  }
}

TEST_CASE("CLS recovers the truth on a large noisy sample") {
  const WeightMatrix w = testing::network(Generator::Dyad, 3000, 9);
  const ObservedData d = testing::simulated(w, 10);
  const FitResult fit = fit_cls(d);
  CHECK(fit.converged);
  CHECK(std::abs(fit.rho - 0.2) < 0.25);
  CHECK(std::abs(fit.beta[1] - 0.3) < 0.1);
}

#include "helpers.hpp"
#include "psar/simulate.hpp"
#include "psar/spmat.hpp"

#include <doctest.h>

using namespace psar;

TEST_CASE("simulate_sar solves the SAR system") {
  const WeightMatrix w = testing::network(Generator::Dyad, 200, 1);
  const Theta theta{0.4, Vector::Constant(2, 0.3), 1.0};
  const Matrix x = gen_covariates(w.size(), 2, 7);
  const TrueData t = simulate_sar(w, theta, x, 8);
  const Vector lhs = t.y - theta.rho * (w.matrix() * t.y);
  CHECK((lhs - x * theta.beta - t.e).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("rho = 0 gives the linear model") {
  const WeightMatrix w = testing::network(Generator::Dyad, 100, 2);
  const Theta theta{0.0, Vector::Constant(2, 0.3), 1.0};
  const Matrix x = gen_covariates(w.size(), 2, 1);
  const TrueData t = simulate_sar(w, theta, x, 3);
  CHECK((t.y - x * theta.beta - t.e).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("covariates and errors are reproducible") {
  CHECK(gen_covariates(50, 3, 9) == gen_covariates(50, 3, 9));
  CHECK_FALSE(gen_covariates(50, 3, 9) == gen_covariates(50, 3, 10));
  const WeightMatrix w = testing::network(Generator::Sbm, 100, 3);
  const Theta theta{0.2, Vector::Constant(2, 0.3), 1.0};
  const Matrix x = gen_covariates(w.size(), 2, 1);
  CHECK(simulate_sar(w, theta, x, 4).y == simulate_sar(w, theta, x, 4).y);
}

TEST_CASE("privacy noise touches only y and the protected columns") {
  const WeightMatrix w = testing::network(Generator::Dyad, 200, 1);
  const Theta theta{0.2, Vector::Constant(3, 0.3), 1.0};
  const Matrix x = gen_covariates(w.size(), 3, 2);
  const TrueData t = simulate_sar(w, theta, x, 3);
  const ObservedData d = add_privacy_noise(t, {0.5, 0.5, 2, 1, NoiseLaw::Normal}, 4);
  CHECK(d.x_star.leftCols(2) == x.leftCols(2));
  CHECK((d.x_star.col(2) - x.col(2)).cwiseAbs().maxCoeff() > 0.0);
  CHECK((d.y_star - t.y).cwiseAbs().maxCoeff() > 0.0);
  const ObservedData clean = add_privacy_noise(t, {0.0, 0.0, 2, 1, NoiseLaw::Normal}, 4);
  CHECK(clean.y_star == t.y);
  CHECK(clean.x_star == x);
  CHECK_THROWS_AS(add_privacy_noise(t, {0.5, 0.5, 1, 1, NoiseLaw::Normal}, 4), Error);
}

TEST_CASE("noise laws have the configured variance") {
  for (auto law : {NoiseLaw::Normal, NoiseLaw::ScaledT6}) {
    Rng rng = make_rng(17);
    const Index n = 400000;
    const Vector v = draw_noise(n, 0.5, law, rng);
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(n - 1);
    CHECK(std::abs(mean) < 4.0 * std::sqrt(0.5 / n));
    // Var of the sample variance is about 2 sigma^4/n for the normal and 5 sigma^4/n for t(6).
    CHECK(std::abs(var - 0.5) < 4.0 * 0.5 * std::sqrt(5.0 / n));
  }
}

TEST_CASE("t6 at variance 0.5 is t(6) over root 3") {
  Rng a = make_rng(5);
  Rng b = make_rng(5);
  const Vector v = draw_noise(10, 0.5, NoiseLaw::ScaledT6, a);
  for (Index i = 0; i < 10; ++i) {
    const double unit = draw_unit(b, NoiseLaw::ScaledT6);  // t6 * sqrt(2/3)
    CHECK(v[i] == doctest::Approx(unit / std::sqrt(2.0)));
    CHECK(v[i] == doctest::Approx(unit * std::sqrt(1.5) / std::sqrt(3.0)));
  }
}

TEST_CASE("split seeds differ across index and stream") {
  CHECK(split_seed(1, 0, 0) != split_seed(1, 1, 0));
  CHECK(split_seed(1, 0, 0) != split_seed(1, 0, 1));
  CHECK(split_seed(1, 0, 0) != split_seed(2, 0, 0));
  CHECK(split_seed(1, 3, 2) == split_seed(1, 3, 2));
}

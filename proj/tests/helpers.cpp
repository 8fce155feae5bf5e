#include "helpers.hpp"

#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace psar::testing {

WeightMatrix small_random(Index n, std::uint64_t seed, double prob) {
  Rng rng = make_rng(seed);
  boost::random::uniform_01<double> u;
  std::vector<std::vector<Index>> rows(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i != j && u(rng) < prob) rows[i].push_back(j);
    }
    if (rows[i].empty()) rows[i].push_back((i + 1) % n);
  }
  return row_normalize(Adjacency(n, std::move(rows)));
}

ObservedData simulated(const WeightMatrix& w, std::uint64_t seed, double lambda2, double lambda2_x, double rho) {
  const Theta theta{rho, Vector::Constant(2, 0.3), 1.0};
  const Matrix x = gen_covariates(w.size(), 2, split_seed(seed, 0, 1));
  const TrueData t = simulate_sar(w, theta, x, split_seed(seed, 0, 2));
  return add_privacy_noise(t, PrivacyConfig{lambda2, lambda2_x, 1, 1, NoiseLaw::Normal}, split_seed(seed, 0, 3));
}

double dense_trace(const Matrix& wd, double rho, TraceSpec spec) {
  const Index n = wd.rows();
  const Matrix eye = Matrix::Identity(n, n);
  const Matrix s = eye - rho * wd;
  const Matrix g = s.transpose() * s;
  const Matrix wb = wd.transpose() * s + s.transpose() * wd;
  const Vector c = wd.colwise().squaredNorm().transpose();
  const auto fam = d_rho_family<double>(c, rho);
  const Matrix d = fam.diag.asDiagonal();
  const Matrix dd = fam.ddiag.asDiagonal();
  const Matrix ddd = fam.dddiag.asDiagonal();
  const Matrix wtw = wd.transpose() * wd;
  switch (spec) {
    case TraceSpec::GG_D_Dd: return (g * g * d * dd).trace();
    case TraceSpec::G_DD_Wb: return (g * d * d * wb).trace();
    case TraceSpec::G_D_Dd: return (g * d * dd).trace();
    case TraceSpec::S_DD_Wt: return (s * d * d * wd.transpose()).trace();
    case TraceSpec::G_DD: return (g * d * d).trace();
    case TraceSpec::Wb_DD_Wb: return (wb * d * d * wb).trace();
    case TraceSpec::G_DD_WtW: return (g * d * d * wtw).trace();
    case TraceSpec::Wb_D_Dd_G: return (wb * d * dd * g).trace();
    case TraceSpec::GG_DdDd_DDdd: return (g * g * (dd * dd + d * ddd)).trace();
    case TraceSpec::WtW_DD: return (wtw * d * d).trace();
    case TraceSpec::W_D_Dd_St: return (wd * d * dd * s.transpose()).trace();
    case TraceSpec::G_DdDd_DDdd: return (g * (dd * dd + d * ddd)).trace();
    case TraceSpec::S_D_Dd_St: return (s * d * dd * s.transpose()).trace();
    case TraceSpec::W_DD_St: return (wd * d * d * s.transpose()).trace();
    case TraceSpec::S_DD_St: return (s * d * d * s.transpose()).trace();
  }
  return 0.0;
}

}  // namespace psar::testing

#pragma once

#include "psar/common.hpp"
#include "psar/network.hpp"
#include "psar/rng.hpp"

namespace psar {

/// (rho, beta, sigma2). The protected coefficients are the last p2 entries of beta.
struct Theta {
  double rho = 0.0;
  Vector beta;
  double sigma2 = 1.0;

  Index p() const noexcept { return beta.size(); }
  /// Throws InvalidArgument unless |rho| < 1 and sigma2 > 0.
  void validate() const;
  /// Stacks (rho, beta, sigma2).
  Vector pack() const;
  static Theta unpack(const Vector& v);
};

struct PrivacyConfig {
  double lambda2 = 0.0;    // response noise variance
  double lambda2_x = 0.0;  // variance of the noise on each protected covariate
  Index p1 = 0;            // leading columns observed as-is
  Index p2 = 0;            // trailing protected columns
  NoiseLaw law = NoiseLaw::Normal;

  Index p() const noexcept { return p1 + p2; }
  void validate(Index p) const;
  bool noiseless() const noexcept { return lambda2 == 0.0 && lambda2_x == 0.0; }
};

struct TrueData {
  Vector y;
  Matrix x;
  WeightMatrix w;
  Vector e;
};

struct ObservedData {
  Vector y_star;
  Matrix x_star;
  WeightMatrix w;
  PrivacyConfig privacy;

  Index n() const noexcept { return y_star.size(); }
  Index p() const noexcept { return x_star.cols(); }
  void validate() const;
};

/// i.i.d. standard normal n-by-p matrix.
Matrix gen_covariates(Index n, Index p, std::uint64_t seed);

/// Solves (I - rho W) y = x beta + e with e drawn from `law` scaled to sigma2.
TrueData simulate_sar(const WeightMatrix& w, const Theta& theta, const Matrix& x, std::uint64_t seed,
                      NoiseLaw law = NoiseLaw::Normal);

/// Same solve with caller-supplied errors.
TrueData simulate_sar_with_errors(const WeightMatrix& w, const Theta& theta, const Matrix& x, Vector e);

/// Adds response noise (law from cfg) and normal noise to the last p2 columns.
ObservedData add_privacy_noise(const TrueData& t, const PrivacyConfig& cfg, std::uint64_t seed);

/// Vector of n draws with variance `variance`.
Vector draw_noise(Index n, double variance, NoiseLaw law, Rng& rng);

}  // namespace psar

#pragma once

#include "psar/simulate.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace psar {

/// Random edge flips applied to an observed network.
struct PerturbSpec {
  double s = 0.3;  // flip count is floor(N^s), 0 < s < 0.5
  std::uint64_t seed = 0;
};

/// floor(n^s), guarded against pow rounding just below an integer.
Index flip_count(Index n, double s);

/// Toggles each listed off-diagonal entry. Applying the same list twice is the identity.
Adjacency flip_entries(const Adjacency& a, std::span<const Edge> entries);

/// Flips floor(N^s) distinct off-diagonal entries chosen uniformly. Draws that
/// leave a node without out-links are redrawn, up to 100 attempts.
Adjacency perturb_network(const Adjacency& a, const PerturbSpec& spec);

/// Multivariate SAR: Y = W Y D + X B + E with Y n-by-q.
struct MsarParams {
  Matrix d_mat;  // q x q
  Matrix b_mat;  // p x q
  double sigma2 = 1.0;

  Index q() const noexcept { return d_mat.rows(); }
  void validate(Index p) const;
};

struct MsarData {
  Matrix y;  // n x q
  Matrix x;
  Matrix e;
  Matrix y_star;
  Matrix x_star;
};

/// Errors come column by column from one stream seeded by `seed`, so q = 1 with
/// D = (rho) gives exactly simulate_sar under the same seed. Privacy noise on Y
/// and the protected columns of X follows add_privacy_noise with `privacy_seed`.
/// A privacy config with p1 = p2 = 0 means every covariate column is observed.
MsarData gen_msar(const WeightMatrix& w, const MsarParams& params, const Matrix& x, std::uint64_t seed,
                  const PrivacyConfig& privacy = {}, std::uint64_t privacy_seed = 0,
                  NoiseLaw law = NoiseLaw::Normal);

/// Multi-mode model: nodes split into groups, links only between groups, and
/// Y_k = sum_{l != k} rho_kl W_kl Y_l + X_k beta_k + e_k.
struct MultiModeParams {
  std::vector<Index> group_sizes;
  Matrix rho_cross;  // K x K, zero diagonal
  std::vector<Vector> betas;
  double sigma2 = 1.0;
  PrivacyConfig privacy;

  Index k_groups() const noexcept { return static_cast<Index>(group_sizes.size()); }
  Index total() const;
};

struct MultiModeData {
  std::vector<Index> group;  // per node
  Adjacency adjacency;
  SpMat system;  // I - sum rho_kl W_kl
  Vector y;
  Matrix x;
  Vector y_star;
  Matrix x_star;
};

/// Group id per node for consecutive blocks of the given sizes.
std::vector<Index> group_labels(std::span<const Index> sizes);

/// Cross-group links with probability `prob` per ordered pair, none within a group.
/// Every node keeps at least one cross-group link.
Adjacency gen_multipartite(std::span<const Index> sizes, double prob, std::uint64_t seed);

/// Sum over ordered group pairs of rho_kl times the (k, l) block of A with each
/// row normalized within the block.
SpMat cross_group_operator(const Adjacency& a, std::span<const Index> group, const Matrix& rho_cross);

/// Solves the stacked system on `a`; `n` must equal the sum of group sizes
/// (ConfigError otherwise).
MultiModeData gen_multimode(const MultiModeParams& params, const Adjacency& a, Index n, std::uint64_t seed);

/// Header node_id,group,y,x1,...,xp; observed values.
void write_grouped_csv(std::ostream& out, const MultiModeData& d);

}  // namespace psar

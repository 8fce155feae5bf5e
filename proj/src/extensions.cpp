#include "psar/extensions.hpp"
#include "psar/csv.hpp"
#include "psar/spmat.hpp"

#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

namespace psar {

Index flip_count(Index n, double s) {
  return static_cast<Index>(std::floor(std::pow(static_cast<double>(n), s) + 1e-9));
}

Adjacency flip_entries(const Adjacency& a, std::span<const Edge> entries) {
  const Index n = a.size();
  std::vector<std::set<Index>> rows(n);
  for (Index i = 0; i < n; ++i) {
    const auto nb = a.neighbors(i);
    rows[i].insert(nb.begin(), nb.end());
  }
  for (const auto& [i, j] : entries) {
    if (i < 0 || i >= n || j < 0 || j >= n || i == j) {
      throw Error(ErrorKind::InvalidArgument, "flip target must be an off-diagonal entry");
    }
    if (!rows[i].erase(j)) rows[i].insert(j);
  }
  std::vector<std::vector<Index>> out(n);
  for (Index i = 0; i < n; ++i) out[i].assign(rows[i].begin(), rows[i].end());
  return Adjacency(n, std::move(out));
}

Adjacency perturb_network(const Adjacency& a, const PerturbSpec& spec) {
  if (!(spec.s > 0.0 && spec.s < 0.5)) throw Error(ErrorKind::InvalidArgument, "perturbation exponent must lie in (0, 0.5)");
  const Index n = a.size();
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "perturbation needs at least two nodes");
  const Index count = flip_count(n, spec.s);
  constexpr int kAttempts = 100;
  Index isolated = -1;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng = make_rng(split_seed(spec.seed, static_cast<std::uint64_t>(attempt), 0));
    boost::random::uniform_int_distribution<Index> row(0, n - 1);
    boost::random::uniform_int_distribution<Index> col(0, n - 2);
    std::set<Edge> picked;
    std::vector<Edge> order;
    while (static_cast<Index>(order.size()) < count) {
      const Index i = row(rng);
      Index j = col(rng);
      if (j >= i) ++j;
      if (picked.emplace(i, j).second) order.emplace_back(i, j);
    }
    Adjacency out = flip_entries(a, order);
    isolated = -1;
    for (Index i = 0; i < n && isolated < 0; ++i) {
      if (out.out_degree(i) == 0) isolated = i;
    }
    if (isolated < 0) return out;
  }
  throw Error(ErrorKind::ZeroOutDegree, "every perturbation attempt isolated a node", isolated);
}

void MsarParams::validate(Index p) const {
  const Index q = d_mat.rows();
  if (q < 1 || d_mat.cols() != q) throw Error(ErrorKind::InvalidArgument, "D must be square");
  if (b_mat.rows() != p || b_mat.cols() != q) throw Error(ErrorKind::InvalidArgument, "B must be p x q");
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma2 must be positive");
  // W is row-stochastic, so the spectral radius of D' (x) W is that of D.
  const double radius = Eigen::EigenSolver<Matrix>(d_mat, false).eigenvalues().cwiseAbs().maxCoeff();
  if (!(radius < 1.0)) throw Error(ErrorKind::InvalidArgument, "spectral radius of D must be below 1");
}

MsarData gen_msar(const WeightMatrix& w, const MsarParams& params, const Matrix& x, std::uint64_t seed,
                  const PrivacyConfig& privacy, std::uint64_t privacy_seed, NoiseLaw law) {
  const Index n = w.size();
  const Index q = params.q();
  if (x.rows() != n) throw Error(ErrorKind::InvalidArgument, "covariate rows must match the network");
  params.validate(x.cols());
  PrivacyConfig noise = privacy;
  if (noise.p() == 0) noise.p1 = x.cols();  // no column split given: all observed
  noise.validate(x.cols());

  MsarData out;
  out.x = x;
  out.e.resize(n, q);
  Rng rng = make_rng(seed);
  for (Index k = 0; k < q; ++k) out.e.col(k) = draw_noise(n, params.sigma2, law, rng);
  const Matrix rhs = x * params.b_mat + out.e;

  const bool diagonal = (params.d_mat.array() - Matrix(params.d_mat.diagonal().asDiagonal()).array()).abs().maxCoeff() == 0.0;
  out.y.resize(n, q);
  if (diagonal) {
    for (Index k = 0; k < q; ++k) out.y.col(k) = solve_s(w, params.d_mat(k, k), rhs.col(k));
  } else {
    // vec(W Y D) = (D' kron W) vec(Y): block (k, l) of the system is delta_kl I - D(l, k) W.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(q * n + q * q * w.nonzeros()));
    for (Index i = 0; i < n * q; ++i) trip.emplace_back(i, i, 1.0);
    const SpMat& wm = w.matrix();
    for (Index k = 0; k < q; ++k) {
      for (Index l = 0; l < q; ++l) {
        const double c = params.d_mat(l, k);
        if (c == 0.0) continue;
        for (Index col = 0; col < wm.outerSize(); ++col) {
          for (SpMat::InnerIterator it(wm, col); it; ++it) {
            trip.emplace_back(k * n + it.row(), l * n + it.col(), -c * it.value());
          }
        }
      }
    }
    SpMat sys(n * q, n * q);
    sys.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<SpMat> lu(sys);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "MSAR system is singular");
    const Vector vec_rhs = Eigen::Map<const Vector>(rhs.data(), n * q);
    const Vector vec_y = lu.solve(vec_rhs);
    out.y = Eigen::Map<const Matrix>(vec_y.data(), n, q);
  }

  out.y_star = out.y;
  out.x_star = x;
  if (noise.lambda2 > 0.0) {
    Rng r = make_rng(split_seed(privacy_seed, 0, 0));
    for (Index k = 0; k < q; ++k) out.y_star.col(k) += draw_noise(n, noise.lambda2, noise.law, r);
  }
  if (noise.lambda2_x > 0.0 && noise.p2 > 0) {
    Rng r = make_rng(split_seed(privacy_seed, 0, 1));
    for (Index j = noise.p1; j < noise.p1 + noise.p2; ++j) {
      out.x_star.col(j) += draw_noise(n, noise.lambda2_x, NoiseLaw::Normal, r);
    }
  }
  return out;
}

Index MultiModeParams::total() const {
  return std::accumulate(group_sizes.begin(), group_sizes.end(), Index{0});
}

std::vector<Index> group_labels(std::span<const Index> sizes) {
  std::vector<Index> g;
  for (Index k = 0; k < static_cast<Index>(sizes.size()); ++k) g.insert(g.end(), static_cast<std::size_t>(sizes[k]), k);
  return g;
}

Adjacency gen_multipartite(std::span<const Index> sizes, double prob, std::uint64_t seed) {
  if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorKind::InvalidArgument, "link probability outside [0, 1]");
  if (sizes.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two groups");
  const auto group = group_labels(sizes);
  const Index n = static_cast<Index>(group.size());
  Rng rng = make_rng(seed);
  boost::random::uniform_01<double> unif;
  std::vector<std::vector<Index>> rows(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (group[i] != group[j] && unif(rng) < prob) rows[i].push_back(j);
    }
    if (rows[i].empty()) {
      // Forced link to a uniformly chosen node of another group.
      boost::random::uniform_int_distribution<Index> pick(0, n - 1 - sizes[group[i]]);
      Index j = pick(rng);
      const Index start = std::accumulate(sizes.begin(), sizes.begin() + group[i], Index{0});
      if (j >= start) j += sizes[group[i]];
      rows[i].push_back(j);
    }
  }
  return Adjacency(n, std::move(rows));
}

SpMat cross_group_operator(const Adjacency& a, std::span<const Index> group, const Matrix& rho_cross) {
  const Index n = a.size();
  const Index k = rho_cross.rows();
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<Index> per_block(static_cast<std::size_t>(k));
  for (Index i = 0; i < n; ++i) {
    std::fill(per_block.begin(), per_block.end(), 0);
    for (Index j : a.neighbors(i)) ++per_block[group[j]];
    for (Index j : a.neighbors(i)) {
      const Index gi = group[i];
      const Index gj = group[j];
      if (gi == gj) throw Error(ErrorKind::InvalidArgument, "within-group link " + std::to_string(i) + "->" + std::to_string(j));
      const double r = rho_cross(gi, gj);
      if (r != 0.0) trip.emplace_back(i, j, r / static_cast<double>(per_block[gj]));
    }
  }
  SpMat op(n, n);
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

MultiModeData gen_multimode(const MultiModeParams& params, const Adjacency& a, Index n, std::uint64_t seed) {
  const Index k = params.k_groups();
  if (k < 1) throw Error(ErrorKind::ConfigError, "no groups given");
  for (Index s : params.group_sizes) {
    if (s < 1) throw Error(ErrorKind::ConfigError, "group sizes must be positive");
  }
  if (params.total() != n) {
    throw Error(ErrorKind::ConfigError,
                "group sizes sum to " + std::to_string(params.total()) + ", expected " + std::to_string(n));
  }
  if (a.size() != n) throw Error(ErrorKind::ConfigError, "network size differs from the group total");
  if (params.rho_cross.rows() != k || params.rho_cross.cols() != k) {
    throw Error(ErrorKind::ConfigError, "cross effects must be K x K");
  }
  if (params.rho_cross.diagonal().cwiseAbs().maxCoeff() != 0.0) {
    throw Error(ErrorKind::ConfigError, "cross effects need a zero diagonal");
  }
  if (static_cast<Index>(params.betas.size()) != k) throw Error(ErrorKind::ConfigError, "one coefficient vector per group");
  const Index p = params.betas.front().size();
  for (const auto& b : params.betas) {
    if (b.size() != p) throw Error(ErrorKind::ConfigError, "coefficient vectors differ in length");
  }
  params.privacy.validate(p);

  MultiModeData out;
  out.group = group_labels(params.group_sizes);
  out.adjacency = a;
  SpMat eye(n, n);
  eye.setIdentity();
  out.system = eye - cross_group_operator(a, out.group, params.rho_cross);

  out.x = gen_covariates(n, p, split_seed(seed, 0, 1));
  Rng rng = make_rng(split_seed(seed, 0, 2));
  const Vector e = draw_noise(n, params.sigma2, params.privacy.law, rng);
  Vector rhs(n);
  for (Index i = 0; i < n; ++i) rhs[i] = out.x.row(i).dot(params.betas[out.group[i]]) + e[i];

  Eigen::SparseLU<SpMat> lu(out.system);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "multi-mode system is singular");
  out.y = lu.solve(rhs);
  if (!out.y.allFinite()) throw Error(ErrorKind::SingularSystem, "multi-mode solve produced non-finite values");

  TrueData t;
  t.y = out.y;
  t.x = out.x;
  const ObservedData obs = add_privacy_noise(t, params.privacy, split_seed(seed, 0, 3));
  out.y_star = obs.y_star;
  out.x_star = obs.x_star;
  return out;
}

void write_grouped_csv(std::ostream& out, const MultiModeData& d) {
  out << "node_id,group,y";
  for (Index j = 0; j < d.x_star.cols(); ++j) out << ",x" << j + 1;
  out << '\n';
  for (Index i = 0; i < d.y_star.size(); ++i) {
    out << i << ',' << d.group[i] << ',' << format_double(d.y_star[i]);
    for (Index j = 0; j < d.x_star.cols(); ++j) out << ',' << format_double(d.x_star(i, j));
    out << '\n';
  }
}

}  // namespace psar

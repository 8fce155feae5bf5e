#pragma once

#include "psar/common.hpp"
#include "psar/network.hpp"

#include <Eigen/SparseLU>
#include <Eigen/SparseCholesky>

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string_view>

namespace psar {

// Dense factorizations beat sparse ones for the graphs we generate up to a few
// thousand nodes because the LU/Cholesky fill of S and SS' is large.
inline constexpr Index kDenseLuCutoff = 5000;
inline constexpr Index kDenseOmegaCutoff = 2000;

/// tr(A B) for dense operands.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar trace_of_product(const Eigen::MatrixBase<DerivedA>& a,
                                           const Eigen::MatrixBase<DerivedB>& b) {
  return a.cwiseProduct(b.transpose()).sum();
}

/// tr(A B) with A sparse and B dense, touching only the nonzeros of A.
template <typename Scalar, int Options, typename Derived>
Scalar trace_of_product(const Eigen::SparseMatrix<Scalar, Options>& a, const Eigen::MatrixBase<Derived>& b) {
  Scalar acc(0);
  for (Index k = 0; k < a.outerSize(); ++k) {
    for (typename Eigen::SparseMatrix<Scalar, Options>::InnerIterator it(a, k); it; ++it) {
      acc += it.value() * b(it.col(), it.row());
    }
  }
  return acc;
}

/// S = I - rho W, applied matrix-free.
class SMatrix {
 public:
  SMatrix(const WeightMatrix& w, double rho) : w_(w), rho_(rho) {}

  double rho() const noexcept { return rho_; }
  const WeightMatrix& weights() const noexcept { return w_; }
  Index size() const noexcept { return w_.size(); }

  template <typename Derived>
  Matrix apply(const Eigen::MatrixBase<Derived>& v) const {
    return v - rho_ * (w_.matrix() * v);
  }
  template <typename Derived>
  Matrix apply_transpose(const Eigen::MatrixBase<Derived>& v) const {
    return v - rho_ * (w_.transpose() * v);
  }
  SpMat sparse() const;

 private:
  WeightMatrix w_;
  double rho_;
};

/// LU factorization of S; dense below kDenseLuCutoff, sparse above.
class SFactor {
 public:
  SFactor(const WeightMatrix& w, double rho, Index dense_cutoff = kDenseLuCutoff);

  double log_abs_det() const noexcept { return log_abs_det_; }
  int sign() const noexcept { return sign_; }
  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;

 private:
  std::shared_ptr<const Eigen::PartialPivLU<Matrix>> dense_;
  std::shared_ptr<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>> sparse_;
  double log_abs_det_ = 0.0;
  int sign_ = 1;
};

/// Solves S y = b. For |rho| <= 0.9 this iterates y <- b + rho W y, which converges
/// geometrically because W is row-stochastic; otherwise it factorizes S.
Vector solve_s(const WeightMatrix& w, double rho, const Vector& b);

/// log|det S|. Throws SingularSystem when S is singular or det S <= 0.
double logdet_s(const SMatrix& s);

/// Omega = sigma2 I + lambda2 S S' with a cached Cholesky factor.
class OmegaMatrix {
 public:
  OmegaMatrix(const WeightMatrix& w, double rho, double sigma2, double lambda2,
              Index dense_cutoff = kDenseOmegaCutoff);

  Index size() const noexcept { return n_; }
  double sigma2() const noexcept { return sigma2_; }
  double lambda2() const noexcept { return lambda2_; }
  bool is_dense() const noexcept { return static_cast<bool>(dense_); }

  double log_det() const noexcept { return log_det_; }
  Matrix solve(const Matrix& b) const;
  Vector solve(const Vector& b) const;
  /// Explicit symmetric inverse.
  Matrix inverse() const;

 private:
  Index n_ = 0;
  double sigma2_ = 0.0;
  double lambda2_ = 0.0;
  std::shared_ptr<const Eigen::LLT<Matrix>> dense_;
  std::shared_ptr<const Eigen::SimplicialLLT<SpMat>> sparse_;
  double log_det_ = 0.0;
};

/// sigma2 I + lambda2 S S' as a sparse matrix.
SpMat omega_sparse(const WeightMatrix& w, double rho, double sigma2, double lambda2);

inline double logdet_omega(const OmegaMatrix& o) { return o.log_det(); }
inline Matrix omega_solve(const OmegaMatrix& o, const Matrix& b) { return o.solve(b); }

/// tr(Omega^-1 F1 Omega^-1 F2 ... Omega^-1 Fk), by blocks of columns with k solves
/// per block. O(k N^3) in the worst case.
double trace_omega_inv_prod(const OmegaMatrix& o, std::span<const SpMat> factors);

/// d = 1/diag(S'S) and its first two derivatives in rho, using diag(S'S) = 1 + rho^2 c.
template <typename Scalar>
struct DRho {
  VectorT<Scalar> diag;
  VectorT<Scalar> ddiag;
  VectorT<Scalar> dddiag;
  VectorT<Scalar> col_sq;
};

template <typename Scalar>
DRho<Scalar> d_rho_family(const VectorT<Scalar>& col_sq, Scalar rho) {
  DRho<Scalar> d;
  d.col_sq = col_sq;
  const auto n = col_sq.size();
  d.diag.resize(n);
  d.ddiag.resize(n);
  d.dddiag.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar c = col_sq[i];
    const Scalar g = Scalar(1) + rho * rho * c;
    d.diag[i] = Scalar(1) / g;
    d.ddiag[i] = Scalar(-2) * rho * c / (g * g);
    d.dddiag[i] = (Scalar(-2) * c * g + Scalar(8) * rho * rho * c * c) / (g * g * g);
  }
  return d;
}

inline DRho<double> d_rho_family(const WeightMatrix& w, double rho) { return d_rho_family<double>(w.col_sq(), rho); }

/// Trace expressions of the least-squares corrections. G = S'S, Wb = W'S + S'W,
/// D = diag(d), Dd = its first and Ddd its second derivative in rho.
enum class TraceSpec {
  GG_D_Dd,      // tr(G^2 D Dd)
  G_DD_Wb,      // tr(G D^2 Wb)
  G_D_Dd,       // tr(G D Dd)
  S_DD_Wt,      // tr(S D^2 W')
  G_DD,         // tr(G D^2)
  Wb_DD_Wb,     // tr(Wb D^2 Wb)
  G_DD_WtW,     // tr(G D^2 W'W)
  Wb_D_Dd_G,    // tr(Wb D Dd G)
  GG_DdDd_DDdd, // tr(G^2 (Dd^2 + D Ddd))
  WtW_DD,       // tr(W'W D^2)
  W_D_Dd_St,    // tr(W D Dd S')
  G_DdDd_DDdd,  // tr(G (Dd^2 + D Ddd))
  S_D_Dd_St,    // tr(S D Dd S')
  W_DD_St,      // tr(W D^2 S')
  S_DD_St,      // tr(S D^2 S')
};
inline constexpr std::size_t kTraceSpecCount = 15;

TraceSpec parse_trace_spec(std::string_view name);
const char* to_string(TraceSpec spec) noexcept;

/// Per-network cache of the union pattern of I, W + W' and W'W. All traces in
/// TraceSpec are sums over this pattern; nothing N-by-N dense is formed.
class LsTraceContext {
 public:
  explicit LsTraceContext(const WeightMatrix& w);

  Index size() const noexcept { return n_; }
  Index pattern_nonzeros() const noexcept { return static_cast<Index>(row_.size()); }
  const Vector& col_sq() const noexcept { return col_sq_; }
  /// All trace expressions at rho, indexed by TraceSpec.
  std::array<double, kTraceSpecCount> evaluate(double rho) const;
  /// diag(G^2) at rho.
  Vector g2_diag(double rho) const;

 private:

  Index n_ = 0;
  Vector col_sq_;
  // Column-major walk of the union pattern: entry k sits at (row_[k], col_[k]).
  std::vector<Index> row_;
  std::vector<Index> col_;
  std::vector<double> b_;  // (W + W')_ij
  std::vector<double> c_;  // (W'W)_ij
};

double sparse_trace_products(const LsTraceContext& ctx, double rho, TraceSpec spec);

}  // namespace psar

#include "psar/spmat.hpp"

#include <cmath>
#include <string>

namespace psar {

SpMat SMatrix::sparse() const {
  SpMat eye(size(), size());
  eye.setIdentity();
  SpMat s = eye - rho_ * w_.matrix();
  s.makeCompressed();
  return s;
}

SFactor::SFactor(const WeightMatrix& w, double rho, Index dense_cutoff) {
  const Index n = w.size();
  if (n <= dense_cutoff) {
    Matrix s = -rho * w.dense();
    s.diagonal().array() += 1.0;
    auto lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(s);
    const auto& u = lu->matrixLU();
    double logdet = 0.0;
    int sign = lu->permutationP().determinant() > 0 ? 1 : -1;
    const double scale = u.diagonal().cwiseAbs().maxCoeff();
    for (Index i = 0; i < n; ++i) {
      const double d = u(i, i);
      if (!(std::abs(d) > 1e-14 * scale)) throw Error(ErrorKind::SingularSystem, "S is singular");
      logdet += std::log(std::abs(d));
      if (d < 0) sign = -sign;
    }
    log_abs_det_ = logdet;
    sign_ = sign;
    dense_ = std::move(lu);
  } else {
    auto lu = std::make_shared<Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>>();
    lu->compute(SMatrix(w, rho).sparse());
    if (lu->info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "sparse LU of S failed");
    log_abs_det_ = lu->logAbsDeterminant();
    sign_ = static_cast<int>(lu->signDeterminant());
    if (!std::isfinite(log_abs_det_)) throw Error(ErrorKind::SingularSystem, "S is singular");
    sparse_ = std::move(lu);
  }
}

Vector SFactor::solve(const Vector& b) const {
  if (dense_) return dense_->solve(b);
  Vector x = sparse_->solve(b);
  return x;
}

Matrix SFactor::solve(const Matrix& b) const {
  if (dense_) return dense_->solve(b);
  Matrix x = sparse_->solve(b);
  return x;
}

Vector solve_s(const WeightMatrix& w, double rho, const Vector& b) {
  if (rho == 0.0) return b;
  if (std::abs(rho) > 0.9) return SFactor(w, rho).solve(b);
  // The infinity norm of rho W is |rho|, so each sweep shrinks the error by |rho|.
  Vector y = b;
  for (int it = 0; it < 1000; ++it) {
    Vector next = b + rho * (w.matrix() * y);
    const double change = (next - y).cwiseAbs().maxCoeff();
    y.swap(next);
    if (change <= 1e-15 * y.cwiseAbs().maxCoeff()) break;
  }
  return y;
}

double logdet_s(const SMatrix& s) {
  const SFactor f(s.weights(), s.rho());
  if (f.sign() <= 0) throw Error(ErrorKind::SingularSystem, "det S is not positive");
  return f.log_abs_det();
}

SpMat omega_sparse(const WeightMatrix& w, double rho, double sigma2, double lambda2) {
  const SpMat s = SMatrix(w, rho).sparse();
  SpMat eye(w.size(), w.size());
  eye.setIdentity();
  SpMat sst = s * SpMat(s.transpose());
  SpMat omega = sigma2 * eye + lambda2 * sst;
  omega.makeCompressed();
  return omega;
}

OmegaMatrix::OmegaMatrix(const WeightMatrix& w, double rho, double sigma2, double lambda2, Index dense_cutoff)
    : n_(w.size()), sigma2_(sigma2), lambda2_(lambda2) {
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::NotPositiveDefinite, "sigma2 must be positive");
  const SpMat omega = omega_sparse(w, rho, sigma2, lambda2);
  auto use_dense = [&] {
    auto llt = std::make_shared<Eigen::LLT<Matrix>>(Matrix(omega));
    if (llt->info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "Omega Cholesky failed");
    log_det_ = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
    dense_ = std::move(llt);
  };
  if (n_ <= dense_cutoff) {
    use_dense();
    return;
  }
  auto llt = std::make_shared<Eigen::SimplicialLLT<SpMat>>(omega);
  if (llt->info() != Eigen::Success) throw Error(ErrorKind::NotPositiveDefinite, "Omega Cholesky failed");
  const double full = 0.5 * static_cast<double>(n_) * static_cast<double>(n_ + 1);
  if (static_cast<double>(SpMat(llt->matrixL()).nonZeros()) > 0.5 * full) {
    use_dense();
    return;
  }
  log_det_ = 2.0 * SpMat(llt->matrixL()).diagonal().array().log().sum();
  sparse_ = std::move(llt);
}

Matrix OmegaMatrix::solve(const Matrix& b) const {
  if (dense_) return dense_->solve(b);
  Matrix x = sparse_->solve(b);
  return x;
}

Vector OmegaMatrix::solve(const Vector& b) const {
  if (dense_) return dense_->solve(b);
  Vector x = sparse_->solve(b);
  return x;
}

Matrix OmegaMatrix::inverse() const {
  if (!dense_) return solve(Matrix(Matrix::Identity(n_, n_)));
  // Omega^-1 = L^-T L^-1; forming L^-1 and a rank update costs a third of a full solve.
  Matrix linv = Matrix::Identity(n_, n_);
  dense_->matrixL().solveInPlace(linv);
  Matrix inv = Matrix::Zero(n_, n_);
  inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
  inv.triangularView<Eigen::StrictlyUpper>() = inv.transpose();
  return inv;
}

double trace_omega_inv_prod(const OmegaMatrix& o, std::span<const SpMat> factors) {
  const Index n = o.size();
  for (const auto& f : factors) {
    if (f.rows() != n || f.cols() != n) throw Error(ErrorKind::InvalidArgument, "trace factor size mismatch");
  }
  constexpr Index kBlock = 64;
  double total = 0.0;
  for (Index start = 0; start < n; start += kBlock) {
    const Index width = std::min(kBlock, n - start);
    Matrix z = Matrix::Zero(n, width);
    for (Index k = 0; k < width; ++k) z(start + k, k) = 1.0;
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
      Matrix fz = (*it) * z;
      z = o.solve(fz);
    }
    if (factors.empty()) z = o.solve(z);
    for (Index k = 0; k < width; ++k) total += z(start + k, k);
  }
  return total;
}

namespace {

constexpr std::array<const char*, kTraceSpecCount> kSpecNames = {
    "GG_D_Dd", "G_DD_Wb",      "G_D_Dd",    "S_DD_Wt",     "G_DD",      "Wb_DD_Wb", "G_DD_WtW", "Wb_D_Dd_G",
    "GG_DdDd_DDdd", "WtW_DD", "W_D_Dd_St", "G_DdDd_DDdd", "S_D_Dd_St", "W_DD_St",  "S_DD_St",
};

}  // namespace

TraceSpec parse_trace_spec(std::string_view name) {
  for (std::size_t k = 0; k < kSpecNames.size(); ++k) {
    if (name == kSpecNames[k]) return static_cast<TraceSpec>(k);
  }
  throw Error(ErrorKind::UnknownSpec, "trace spec '" + std::string(name) + "'");
}

const char* to_string(TraceSpec spec) noexcept {
  const auto k = static_cast<std::size_t>(spec);
  return k < kSpecNames.size() ? kSpecNames[k] : "?";
}

LsTraceContext::LsTraceContext(const WeightMatrix& w) : n_(w.size()), col_sq_(w.col_sq()) {
  SpMat eye(n_, n_);
  eye.setIdentity();
  const SpMat b = w.matrix() + w.transpose();
  const SpMat c = (w.transpose() * w.matrix()).pruned(0.0, 0.0);
  const SpMat pattern = eye + b + c;
  // Adding the zero-scaled union pattern gives both operands its exact structure.
  SpMat bu = b + 0.0 * pattern;
  SpMat cu = c + 0.0 * pattern;
  bu.makeCompressed();
  cu.makeCompressed();
  if (bu.nonZeros() != cu.nonZeros()) throw Error(ErrorKind::InvalidArgument, "trace pattern mismatch");
  const Index nnz = bu.nonZeros();
  row_.reserve(nnz);
  col_.reserve(nnz);
  b_.reserve(nnz);
  c_.reserve(nnz);
  for (Index j = 0; j < n_; ++j) {
    SpMat::InnerIterator ib(bu, j);
    SpMat::InnerIterator ic(cu, j);
    for (; ib; ++ib, ++ic) {
      if (!ic || ib.row() != ic.row()) throw Error(ErrorKind::InvalidArgument, "trace pattern mismatch");
      row_.push_back(ib.row());
      col_.push_back(j);
      b_.push_back(ib.value());
      c_.push_back(ic.value());
    }
  }
}

Vector LsTraceContext::g2_diag(double rho) const {
  Vector g2 = Vector::Zero(n_);
  const double r2 = rho * rho;
  for (std::size_t k = 0; k < row_.size(); ++k) {
    const double g = (row_[k] == col_[k] ? 1.0 : 0.0) - rho * b_[k] + r2 * c_[k];
    g2[col_[k]] += g * g;
  }
  return g2;
}

std::array<double, kTraceSpecCount> LsTraceContext::evaluate(double rho) const {
  const DRho<double> d = d_rho_family<double>(col_sq_, rho);
  const Vector dd = d.diag.cwiseProduct(d.diag);
  const Vector d_dd = d.diag.cwiseProduct(d.ddiag);
  const Vector second = d.ddiag.cwiseProduct(d.ddiag) + d.diag.cwiseProduct(d.dddiag);
  const Vector g_diag = (1.0 + rho * rho * col_sq_.array()).matrix();

  const double r2 = rho * rho;
  Vector g2 = Vector::Zero(n_);
  double g_dd_wb = 0.0;
  double wb_dd_wb = 0.0;
  double g_dd_wtw = 0.0;
  double wb_d_dd_g = 0.0;
  for (std::size_t k = 0; k < row_.size(); ++k) {
    const Index j = col_[k];
    const double g = (row_[k] == j ? 1.0 : 0.0) - rho * b_[k] + r2 * c_[k];
    const double wb = b_[k] - 2.0 * rho * c_[k];
    g2[j] += g * g;
    g_dd_wb += g * wb * dd[j];
    wb_dd_wb += wb * wb * dd[j];
    g_dd_wtw += g * c_[k] * dd[j];
    wb_d_dd_g += wb * g * d_dd[j];
  }

  std::array<double, kTraceSpecCount> t{};
  auto at = [&t](TraceSpec s) -> double& { return t[static_cast<std::size_t>(s)]; };
  at(TraceSpec::GG_D_Dd) = g2.dot(d_dd);
  at(TraceSpec::G_DD_Wb) = g_dd_wb;
  at(TraceSpec::G_D_Dd) = g_diag.dot(d_dd);
  // W has a zero diagonal, so (S D^2 W')_ii = -rho sum_j w_ij^2 d_j^2.
  at(TraceSpec::S_DD_Wt) = -rho * col_sq_.dot(dd);
  at(TraceSpec::G_DD) = g_diag.dot(dd);
  at(TraceSpec::Wb_DD_Wb) = wb_dd_wb;
  at(TraceSpec::G_DD_WtW) = g_dd_wtw;
  at(TraceSpec::Wb_D_Dd_G) = wb_d_dd_g;
  at(TraceSpec::GG_DdDd_DDdd) = g2.dot(second);
  at(TraceSpec::WtW_DD) = col_sq_.dot(dd);
  at(TraceSpec::W_D_Dd_St) = -rho * col_sq_.dot(d_dd);
  at(TraceSpec::G_DdDd_DDdd) = g_diag.dot(second);
  at(TraceSpec::S_D_Dd_St) = g_diag.dot(d_dd);
  at(TraceSpec::W_DD_St) = -rho * col_sq_.dot(dd);
  at(TraceSpec::S_DD_St) = g_diag.dot(dd);
  return t;
}

double sparse_trace_products(const LsTraceContext& ctx, double rho, TraceSpec spec) {
  const auto k = static_cast<std::size_t>(spec);
  if (k >= kTraceSpecCount) throw Error(ErrorKind::UnknownSpec, "trace spec index out of range");
  return ctx.evaluate(rho)[k];
}

}  // namespace psar

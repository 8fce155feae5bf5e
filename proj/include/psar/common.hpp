#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace psar {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorKind {
  InvalidArgument,
  ZeroOutDegree,
  ProbabilityOverflow,
  SingularSystem,
  NotPositiveDefinite,
  UnknownSpec,
  RankDeficientX,
  NoInteriorMax,
  SingularCorrectedHessian,
  NonPositiveSigma2,
  MaxIterExceeded,
  TooFewConverged,
  TooManyFailures,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<Index> node = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), node_(node) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Offending node for ZeroOutDegree.
  std::optional<Index> node() const noexcept { return node_; }

 private:
  ErrorKind kind_;
  std::optional<Index> node_;
};

// True for failures of the configuration or input files, as opposed to
// numerical failures of an estimator.
bool is_config_error(ErrorKind kind) noexcept;

}  // namespace psar

#pragma once

#include "psar/fit_result.hpp"
#include "psar/inference.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace psar {

struct ExperimentConfig {
  Generator generator = Generator::Dyad;
  Index n = 500;
  Index replicates = 200;
  Theta theta0{0.2, Vector::Constant(2, 0.3), 1.0};
  PrivacyConfig privacy{0.5, 0.5, 1, 1, NoiseLaw::Normal};
  std::vector<EstimatorKind> estimators{EstimatorKind::Qmle, EstimatorKind::Cle, EstimatorKind::Cls};
  std::uint64_t seed = 1;
  Index bootstrap_b = 100;  // 0 turns SE-hat and coverage off for CLE and CLS
  BootstrapMode bootstrap_mode = BootstrapMode::Linearized;
  double ci_level = 0.95;
  GeneratorOptions generator_options;
  std::optional<double> perturb_s;  // estimate on a perturbed copy of the network
  unsigned workers = 0;             // 0: one per hardware thread
  std::string raw_output;
  std::string report_output;

  void validate() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys are a ConfigError.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
/// Applies one key; shared by the file parser and command-line overrides.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);

/// Parameter labels in FitResult::point() order.
std::vector<std::string> parameter_names(EstimatorKind kind, Index p);
/// Truth in the same order as parameter_names.
Vector true_parameters(EstimatorKind kind, const Theta& theta0);

struct ReplicateRecord {
  Index replicate = 0;
  EstimatorKind kind = EstimatorKind::Qmle;
  bool ok = false;
  std::string status;  // "ok" or the error kind
  int iterations = 0;
  Vector estimate;
  Vector se;  // empty when no standard errors were computed
  Eigen::MatrixX2d ci;
  double seconds = 0.0;  // wall clock of the fit call; kept out of the raw table
};

struct ParamMetrics {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;    // |mean - truth|
  double se = 0.0;      // Monte Carlo SD, divisor R
  double se_hat = 0.0;  // NaN without standard errors
  double cp = 0.0;      // percent; NaN without standard errors
};

/// Metrics over the rows of `estimates` (one replicate per row). `se`, `lower`
/// and `upper` may be empty.
std::vector<ParamMetrics> compute_metrics(const Matrix& estimates, const Matrix& se, const Matrix& lower,
                                          const Matrix& upper, const Vector& truth,
                                          const std::vector<std::string>& names);

struct EstimatorSummary {
  EstimatorKind kind = EstimatorKind::Qmle;
  Index succeeded = 0;
  Index failed = 0;
  double mean_seconds = 0.0;
  std::vector<ParamMetrics> params;

  double skip_rate() const noexcept {
    const Index total = succeeded + failed;
    return total ? static_cast<double>(failed) / static_cast<double>(total) : 0.0;
  }
  const ParamMetrics& param(std::string_view name) const;
};

struct McReport {
  ExperimentConfig config;
  std::vector<EstimatorSummary> summaries;
  std::vector<ReplicateRecord> records;  // ordered by (replicate, estimator)

  const EstimatorSummary& summary(EstimatorKind kind) const;
};

/// One replicate: network, covariates, model errors, privacy noise, fits.
std::vector<ReplicateRecord> run_replicate(const ExperimentConfig& cfg, Index r);

/// Replicates run on a worker pool; the report is assembled in replicate order.
/// Writes the raw table when cfg.raw_output is set. Throws TooManyFailures, after
/// writing, when an estimator fails on more than 10% of replicates.
McReport run_mc(const ExperimentConfig& cfg);

/// Byte-stable replicate table: replicate,estimator,status,iterations,param,estimate,se,lower,upper.
void write_raw_table(std::ostream& out, const McReport& report);
/// estimator,param,truth,mean,bias,se,se_hat,cp,succeeded,failed,mean_seconds.
void write_summary_csv(std::ostream& out, const McReport& report);

/// sqrt(mean((S(rho)^-1 X* beta - Y*)^2)).
double compute_rmse(const FitResult& fit, const ObservedData& d);

struct BenchConfig {
  Generator generator = Generator::Dyad;
  std::vector<Index> grid{500, 1000, 2000, 4000};
  Index reps = 3;
  std::vector<EstimatorKind> estimators{EstimatorKind::Cle, EstimatorKind::Cls};
  Theta theta0{0.2, Vector::Constant(2, 0.3), 1.0};
  PrivacyConfig privacy{0.5, 0.5, 1, 1, NoiseLaw::Normal};
  std::uint64_t seed = 1;
  GeneratorOptions generator_options;
};

struct BenchRow {
  Index n = 0;
  EstimatorKind kind = EstimatorKind::Cle;
  Index reps = 0;
  double mean_seconds = 0.0;
};

/// Wall clock of the fit call only, single-threaded, averaged over reps.
std::vector<BenchRow> bench_timing(const BenchConfig& cfg);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

/// Least-squares slope of log(seconds) on log(n) for one estimator.
double log_log_slope(const std::vector<BenchRow>& rows, EstimatorKind kind);

/// Dispatches to the estimator's fit routine.
FitResult fit_estimator(EstimatorKind kind, const ObservedData& d);

}  // namespace psar

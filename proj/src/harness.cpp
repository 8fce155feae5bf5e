#include "psar/harness.hpp"
#include "psar/cle.hpp"
#include "psar/cls.hpp"
#include "psar/csv.hpp"
#include "psar/extensions.hpp"
#include "psar/qmle.hpp"
#include "psar/spmat.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

namespace psar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorKind::ConfigError, "bad value '" + std::string(value) + "' for " + std::string(key));
}

double as_double(std::string_view key, std::string_view value) {
  try {
    return parse_double(value);
  } catch (const Error&) {
    bad_value(key, value);
  }
}

Index as_index(std::string_view key, std::string_view value) {
  try {
    return parse_index(value);
  } catch (const Error&) {
    bad_value(key, value);
  }
}

std::vector<std::string_view> as_list(std::string_view value) {
  std::vector<std::string_view> out;
  for (auto item : split_csv_line(value)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n < 3) throw Error(ErrorKind::ConfigError, "n must be at least 3");
  if (replicates < 1) throw Error(ErrorKind::ConfigError, "replicates must be at least 1");
  if (estimators.empty()) throw Error(ErrorKind::ConfigError, "no estimators requested");
  if (bootstrap_b == 1 || bootstrap_b < 0) throw Error(ErrorKind::ConfigError, "bootstrap_b must be 0 or at least 2");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw Error(ErrorKind::ConfigError, "ci_level must lie in (0, 1)");
  if (perturb_s && !(*perturb_s > 0.0 && *perturb_s < 0.5)) throw Error(ErrorKind::ConfigError, "perturb_s must lie in (0, 0.5)");
  try {
    theta0.validate();
    privacy.validate(theta0.p());
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
}

void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  value = trim(value);
  try {
    if (key == "generator") cfg.generator = parse_generator(value);
    else if (key == "n") cfg.n = as_index(key, value);
    else if (key == "replicates") cfg.replicates = as_index(key, value);
    else if (key == "rho") cfg.theta0.rho = as_double(key, value);
    else if (key == "beta") {
      const auto items = as_list(value);
      cfg.theta0.beta.resize(static_cast<Index>(items.size()));
      for (std::size_t k = 0; k < items.size(); ++k) cfg.theta0.beta[static_cast<Index>(k)] = as_double(key, items[k]);
    } else if (key == "sigma2") cfg.theta0.sigma2 = as_double(key, value);
    else if (key == "lambda2") cfg.privacy.lambda2 = as_double(key, value);
    else if (key == "lambda2_x") cfg.privacy.lambda2_x = as_double(key, value);
    else if (key == "p1") cfg.privacy.p1 = as_index(key, value);
    else if (key == "p2") cfg.privacy.p2 = as_index(key, value);
    else if (key == "noise_law") cfg.privacy.law = parse_noise_law(value);
    else if (key == "estimators") {
      cfg.estimators.clear();
      for (auto item : as_list(value)) cfg.estimators.push_back(parse_estimator(item));
    } else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_index(key, value));
    else if (key == "bootstrap_b") cfg.bootstrap_b = as_index(key, value);
    else if (key == "bootstrap_mode") cfg.bootstrap_mode = parse_bootstrap_mode(value);
    else if (key == "ci_level") cfg.ci_level = as_double(key, value);
    else if (key == "sbm_blocks") cfg.generator_options.sbm_blocks = as_index(key, value);
    else if (key == "powerlaw_alpha") cfg.generator_options.powerlaw_alpha = as_double(key, value);
    else if (key == "perturb_s") cfg.perturb_s = as_double(key, value);
    else if (key == "workers") cfg.workers = static_cast<unsigned>(as_index(key, value));
    else if (key == "raw_output") cfg.raw_output = std::string(value);
    else if (key == "report_output") cfg.report_output = std::string(value);
    else throw Error(ErrorKind::ConfigError, "unknown key '" + std::string(key) + "'");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) throw;
    throw Error(ErrorKind::ConfigError, std::string(key) + ": " + e.what());
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(cfg, trim(view.substr(0, eq)), view.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return parse_config(in);
}

std::vector<std::string> parameter_names(EstimatorKind kind, Index p) {
  std::vector<std::string> names{"rho"};
  for (Index j = 0; j < p; ++j) names.push_back("beta" + std::to_string(j + 1));
  if (kind != EstimatorKind::Cls && kind != EstimatorKind::Ls) names.emplace_back("sigma2");
  return names;
}

Vector true_parameters(EstimatorKind kind, const Theta& theta0) {
  if (kind == EstimatorKind::Cls || kind == EstimatorKind::Ls) {
    Vector g(theta0.p() + 1);
    g << theta0.rho, theta0.beta;
    return g;
  }
  return theta0.pack();
}

FitResult fit_estimator(EstimatorKind kind, const ObservedData& d) {
  switch (kind) {
    case EstimatorKind::Qmle: return fit_qmle_result(d);
    case EstimatorKind::Cle: return fit_cle(d);
    case EstimatorKind::Cls: return fit_cls(d);
    case EstimatorKind::Ls: return fit_ls(d);
  }
  throw Error(ErrorKind::UnknownSpec, "estimator");
}

std::vector<ReplicateRecord> run_replicate(const ExperimentConfig& cfg, Index r) {
  const auto ur = static_cast<std::uint64_t>(r);
  const DropResult net = generate_network(cfg.generator, cfg.n, split_seed(cfg.seed, ur, 0), cfg.generator_options);
  const WeightMatrix w = row_normalize(net.adjacency);
  const Index n = w.size();
  const Matrix x = gen_covariates(n, cfg.theta0.p(), split_seed(cfg.seed, ur, 1));
  const TrueData truth = simulate_sar(w, cfg.theta0, x, split_seed(cfg.seed, ur, 2), cfg.privacy.law);
  ObservedData d = add_privacy_noise(truth, cfg.privacy, split_seed(cfg.seed, ur, 3));
  if (cfg.perturb_s) {
    d.w = row_normalize(perturb_network(net.adjacency, {*cfg.perturb_s, split_seed(cfg.seed, ur, 9)}));
  }

  std::vector<ReplicateRecord> out;
  for (std::size_t k = 0; k < cfg.estimators.size(); ++k) {
    ReplicateRecord rec;
    rec.replicate = r;
    rec.kind = cfg.estimators[k];
    try {
      const auto start = std::chrono::steady_clock::now();
      FitResult fit = fit_estimator(rec.kind, d);
      rec.seconds = elapsed(start);
      rec.iterations = fit.iterations;
      if (!fit.converged) throw Error(ErrorKind::MaxIterExceeded, "fit did not converge");
      if (rec.kind != EstimatorKind::Qmle && cfg.bootstrap_b > 0) {
        fit.se = bootstrap_se(d, fit, cfg.bootstrap_b, split_seed(cfg.seed, ur, 4 + k), cfg.bootstrap_mode);
      }
      if (fit.se.size() == fit.num_params()) attach_intervals(fit, cfg.ci_level);
      rec.estimate = fit.point();
      rec.se = fit.se;
      rec.ci = fit.ci;
      rec.ok = rec.estimate.allFinite();
      rec.status = rec.ok ? "ok" : "non_finite";
    } catch (const Error& e) {
      rec.ok = false;
      rec.status = to_string(e.kind());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ParamMetrics> compute_metrics(const Matrix& estimates, const Matrix& se, const Matrix& lower,
                                          const Matrix& upper, const Vector& truth,
                                          const std::vector<std::string>& names) {
  const Index r = estimates.rows();
  const Index k = estimates.cols();
  std::vector<ParamMetrics> out(static_cast<std::size_t>(k));
  const bool have_se = se.size() > 0;
  const bool have_ci = lower.size() > 0 && upper.size() > 0;
  for (Index j = 0; j < k; ++j) {
    auto& m = out[static_cast<std::size_t>(j)];
    m.name = names.at(static_cast<std::size_t>(j));
    m.truth = truth[j];
    if (r == 0) {
      m.mean = m.bias = m.se = m.se_hat = m.cp = kNaN;
      continue;
    }
    const auto col = estimates.col(j);
    m.mean = col.mean();
    m.bias = std::abs(m.mean - m.truth);
    m.se = std::sqrt((col.array() - m.mean).square().sum() / static_cast<double>(r));
    m.se_hat = have_se ? se.col(j).mean() : kNaN;
    if (have_ci) {
      Index hits = 0;
      for (Index i = 0; i < r; ++i) hits += (lower(i, j) <= m.truth && m.truth <= upper(i, j)) ? 1 : 0;
      m.cp = 100.0 * static_cast<double>(hits) / static_cast<double>(r);
    } else {
      m.cp = kNaN;
    }
  }
  return out;
}

const ParamMetrics& EstimatorSummary::param(std::string_view name) const {
  for (const auto& m : params) {
    if (m.name == name) return m;
  }
  throw Error(ErrorKind::InvalidArgument, "no parameter '" + std::string(name) + "'");
}

const EstimatorSummary& McReport::summary(EstimatorKind kind) const {
  for (const auto& s : summaries) {
    if (s.kind == kind) return s;
  }
  throw Error(ErrorKind::InvalidArgument, std::string("estimator not in report: ") + to_string(kind));
}

McReport run_mc(const ExperimentConfig& cfg) {
  cfg.validate();
  const Index reps = cfg.replicates;
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(reps));
  std::vector<std::string> errors(static_cast<std::size_t>(reps));

  unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<Index>(workers, reps));
  std::atomic<Index> next{0};
  auto work = [&] {
    for (Index r = next++; r < reps; r = next++) {
      try {
        slots[static_cast<std::size_t>(r)] = run_replicate(cfg, r);
      } catch (const std::exception& e) {
        // Generation failed: every estimator counts as failed for this replicate.
        errors[static_cast<std::size_t>(r)] = e.what();
        auto& slot = slots[static_cast<std::size_t>(r)];
        slot.clear();
        for (auto kind : cfg.estimators) {
          ReplicateRecord rec;
          rec.replicate = r;
          rec.kind = kind;
          rec.status = "generation_failed";
          slot.push_back(std::move(rec));
        }
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) pool.emplace_back(work);
  }

  McReport report;
  report.config = cfg;
  for (auto& slot : slots) {
    for (auto& rec : slot) report.records.push_back(std::move(rec));
  }

  const Index p = cfg.theta0.p();
  for (auto kind : cfg.estimators) {
    EstimatorSummary s;
    s.kind = kind;
    const auto names = parameter_names(kind, p);
    const Index k = static_cast<Index>(names.size());
    std::vector<const ReplicateRecord*> ok;
    double seconds = 0.0;
    for (const auto& rec : report.records) {
      if (rec.kind != kind) continue;
      if (rec.ok) {
        ok.push_back(&rec);
        seconds += rec.seconds;
      } else {
        ++s.failed;
      }
    }
    s.succeeded = static_cast<Index>(ok.size());
    s.mean_seconds = ok.empty() ? kNaN : seconds / static_cast<double>(ok.size());
    const bool have_se = !ok.empty() && std::all_of(ok.begin(), ok.end(), [&](auto* rec) { return rec->se.size() == k; });
    Matrix est(s.succeeded, k), se, lo, hi;
    if (have_se) {
      se.resize(s.succeeded, k);
      lo.resize(s.succeeded, k);
      hi.resize(s.succeeded, k);
    }
    for (Index i = 0; i < s.succeeded; ++i) {
      const auto& rec = *ok[static_cast<std::size_t>(i)];
      est.row(i) = rec.estimate.transpose();
      if (have_se) {
        se.row(i) = rec.se.transpose();
        lo.row(i) = rec.ci.col(0).transpose();
        hi.row(i) = rec.ci.col(1).transpose();
      }
    }
    s.params = compute_metrics(est, se, lo, hi, true_parameters(kind, cfg.theta0), names);
    report.summaries.push_back(std::move(s));
  }

  if (!cfg.raw_output.empty()) {
    std::ofstream out(cfg.raw_output);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + cfg.raw_output);
    write_raw_table(out, report);
  }
  for (const auto& s : report.summaries) {
    if (s.skip_rate() > 0.10) {
      throw Error(ErrorKind::TooManyFailures, std::string(to_string(s.kind)) + " failed on " +
                                                  std::to_string(s.failed) + " of " +
                                                  std::to_string(s.failed + s.succeeded) + " replicates");
    }
  }
  return report;
}

void write_raw_table(std::ostream& out, const McReport& report) {
  out << "replicate,estimator,status,iterations,param,estimate,se,lower,upper\n";
  const Index p = report.config.theta0.p();
  for (const auto& rec : report.records) {
    const auto names = parameter_names(rec.kind, p);
    if (!rec.ok) {
      out << rec.replicate << ',' << to_string(rec.kind) << ',' << rec.status << ',' << rec.iterations
          << ",,,,,\n";
      continue;
    }
    for (Index j = 0; j < rec.estimate.size(); ++j) {
      out << rec.replicate << ',' << to_string(rec.kind) << ',' << rec.status << ',' << rec.iterations << ','
          << names[static_cast<std::size_t>(j)] << ',' << format_double(rec.estimate[j]);
      if (rec.se.size() == rec.estimate.size()) {
        out << ',' << format_double(rec.se[j]) << ',' << format_double(rec.ci(j, 0)) << ','
            << format_double(rec.ci(j, 1));
      } else {
        out << ",,,";
      }
      out << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const McReport& report) {
  out << "estimator,param,truth,mean,bias,se,se_hat,cp,succeeded,failed,mean_seconds\n";
  for (const auto& s : report.summaries) {
    for (const auto& m : s.params) {
      out << to_string(s.kind) << ',' << m.name << ',' << format_double(m.truth) << ',' << format_double(m.mean)
          << ',' << format_double(m.bias) << ',' << format_double(m.se) << ',' << format_double(m.se_hat) << ','
          << format_double(m.cp) << ',' << s.succeeded << ',' << s.failed << ',' << format_double(s.mean_seconds)
          << '\n';
    }
  }
}

double compute_rmse(const FitResult& fit, const ObservedData& d) {
  const Vector y_hat = solve_s(d.w, fit.rho, d.x_star * fit.beta);
  return std::sqrt((y_hat - d.y_star).squaredNorm() / static_cast<double>(d.n()));
}

std::vector<BenchRow> bench_timing(const BenchConfig& cfg) {
  if (cfg.reps < 1) throw Error(ErrorKind::ConfigError, "bench needs at least one repetition");
  std::vector<BenchRow> rows;
  for (Index n : cfg.grid) {
    std::vector<double> total(cfg.estimators.size(), 0.0);
    for (Index r = 0; r < cfg.reps; ++r) {
      const auto ur = static_cast<std::uint64_t>(r);
      const std::uint64_t base = split_seed(cfg.seed, static_cast<std::uint64_t>(n), 0);
      const DropResult net = generate_network(cfg.generator, n, split_seed(base, ur, 0), cfg.generator_options);
      const WeightMatrix w = row_normalize(net.adjacency);
      const Matrix x = gen_covariates(w.size(), cfg.theta0.p(), split_seed(base, ur, 1));
      const TrueData t = simulate_sar(w, cfg.theta0, x, split_seed(base, ur, 2), cfg.privacy.law);
      const ObservedData d = add_privacy_noise(t, cfg.privacy, split_seed(base, ur, 3));
      for (std::size_t k = 0; k < cfg.estimators.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        (void)fit_estimator(cfg.estimators[k], d);
        total[k] += elapsed(start);
      }
    }
    for (std::size_t k = 0; k < cfg.estimators.size(); ++k) {
      rows.push_back({n, cfg.estimators[k], cfg.reps, total[k] / static_cast<double>(cfg.reps)});
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "n,estimator,reps,mean_seconds\n";
  for (const auto& row : rows) {
    out << row.n << ',' << to_string(row.kind) << ',' << row.reps << ',' << format_double(row.mean_seconds) << '\n';
  }
}

double log_log_slope(const std::vector<BenchRow>& rows, EstimatorKind kind) {
  std::vector<double> lx, ly;
  for (const auto& row : rows) {
    if (row.kind != kind) continue;
    lx.push_back(std::log(static_cast<double>(row.n)));
    ly.push_back(std::log(row.mean_seconds));
  }
  if (lx.size() < 2) throw Error(ErrorKind::InvalidArgument, "slope needs two grid points");
  const Eigen::Map<const Vector> vx(lx.data(), static_cast<Index>(lx.size()));
  const Eigen::Map<const Vector> vy(ly.data(), static_cast<Index>(ly.size()));
  const Vector cx = vx.array() - vx.mean();
  const Vector cy = vy.array() - vy.mean();
  return cx.dot(cy) / cx.squaredNorm();
}

}  // namespace psar

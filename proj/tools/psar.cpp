// Command-line front end: simulate, fit, mc, bench.

#include "psar/csv.hpp"
#include "psar/harness.hpp"
#include "psar/inference.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <numeric>

namespace {

using namespace psar;
using nlohmann::json;

constexpr int kConfigExit = 2;
constexpr int kEstimationExit = 3;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return in;
}

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

struct SimulateArgs {
  std::string generator = "dyad";
  Index n = 500;
  double rho = 0.2;
  std::vector<double> beta{0.3, 0.3};
  double sigma2 = 1.0;
  double lambda2 = 0.5;
  double lambda2_x = 0.5;
  Index protected_cols = 1;
  std::string noise_law = "normal";
  std::uint64_t seed = 1;
  Index sbm_blocks = 20;
  double powerlaw_alpha = 3.0;
  std::string data_out = "data.csv";
  std::string edges_out = "edges.csv";
};

void run_simulate(const SimulateArgs& a) {
  GeneratorOptions opts{a.sbm_blocks, a.powerlaw_alpha};
  const DropResult net = generate_network(parse_generator(a.generator), a.n, split_seed(a.seed, 0, 0), opts);
  const WeightMatrix w = row_normalize(net.adjacency);
  Theta theta{a.rho, Eigen::Map<const Vector>(a.beta.data(), static_cast<Index>(a.beta.size())), a.sigma2};
  const Index p = theta.p();
  if (a.protected_cols < 0 || a.protected_cols > p) throw Error(ErrorKind::ConfigError, "protected-cols out of range");
  PrivacyConfig privacy{a.lambda2, a.lambda2_x, p - a.protected_cols, a.protected_cols, parse_noise_law(a.noise_law)};
  const Matrix x = gen_covariates(w.size(), p, split_seed(a.seed, 0, 1));
  const TrueData t = simulate_sar(w, theta, x, split_seed(a.seed, 0, 2), privacy.law);
  const ObservedData d = add_privacy_noise(t, privacy, split_seed(a.seed, 0, 3));
  auto data = open_out(a.data_out);
  write_data_csv(data, d.y_star, d.x_star);
  auto edges = open_out(a.edges_out);
  write_edge_list(edges, net.adjacency);
  std::cerr << "wrote " << w.size() << " nodes (" << net.dropped << " dropped for zero out-degree), "
            << net.adjacency.num_edges() << " edges\n";
}

struct FitArgs {
  std::string data;
  std::string edges;
  std::string estimator = "cle";
  double lambda2 = 0.0;
  double lambda2_x = 0.0;
  std::vector<std::string> protected_cols;
  std::string noise_law = "normal";
  Index bootstrap = 0;
  std::string bootstrap_mode = "linearized";
  double ci_level = 0.95;
  std::uint64_t seed = 1;
  std::string out;
};

// Column index (0-based) for "x3" or "3".
Index covariate_index(const std::string& name, Index p) {
  const std::string_view v = (!name.empty() && name.front() == 'x') ? std::string_view(name).substr(1) : name;
  Index j = 0;
  try {
    j = parse_index(v) - 1;
  } catch (const Error&) {
    throw Error(ErrorKind::ConfigError, "protected column '" + name + "' is not xK or K");
  }
  if (j < 0 || j >= p) throw Error(ErrorKind::ConfigError, "protected column '" + name + "' out of range");
  return j;
}

void run_fit(const FitArgs& a) {
  auto data_in = open_in(a.data);
  const DataTable table = read_data_csv(data_in);
  const Index n = table.y.size();
  const Index p = table.x.cols();
  auto edges_in = open_in(a.edges);
  const DropResult net = drop_zero_out_degree(read_edge_list(edges_in, n));

  // Observed columns first, protected columns last, each in file order.
  std::vector<bool> prot(static_cast<std::size_t>(p), false);
  for (const auto& c : a.protected_cols) prot[static_cast<std::size_t>(covariate_index(c, p))] = true;
  std::vector<Index> order;
  for (Index j = 0; j < p; ++j) if (!prot[j]) order.push_back(j);
  const Index p1 = static_cast<Index>(order.size());
  for (Index j = 0; j < p; ++j) if (prot[j]) order.push_back(j);

  ObservedData d;
  d.w = row_normalize(net.adjacency);
  const Index m = d.w.size();
  d.y_star.resize(m);
  d.x_star.resize(m, p);
  for (Index i = 0; i < m; ++i) {
    const Index src = net.kept[static_cast<std::size_t>(i)];
    d.y_star[i] = table.y[src];
    for (Index j = 0; j < p; ++j) d.x_star(i, j) = table.x(src, order[static_cast<std::size_t>(j)]);
  }
  d.privacy = {a.lambda2, a.lambda2_x, p1, p - p1, parse_noise_law(a.noise_law)};
  d.validate();

  const EstimatorKind kind = parse_estimator(a.estimator);
  const BootstrapMode mode = parse_bootstrap_mode(a.bootstrap_mode);
  FitResult fit = fit_estimator(kind, d);
  if (a.bootstrap > 0 && kind != EstimatorKind::Qmle) fit.se = bootstrap_se(d, fit, a.bootstrap, a.seed, mode);
  if (fit.se.size() == fit.num_params()) attach_intervals(fit, a.ci_level);

  // Back to file column order.
  Vector beta(p), se_beta(p);
  Eigen::MatrixX2d ci_beta(p, 2);
  const bool have_se = fit.se.size() == fit.num_params();
  for (Index j = 0; j < p; ++j) {
    const Index col = order[static_cast<std::size_t>(j)];
    beta[col] = fit.beta[j];
    if (have_se) {
      se_beta[col] = fit.se[j + 1];
      ci_beta.row(col) = fit.ci.row(j + 1);
    }
  }

  json j;
  j["estimator"] = to_string(kind);
  j["n"] = m;
  j["dropped_nodes"] = net.dropped;
  j["rho"] = fit.rho;
  j["beta"] = to_json(beta);
  j["sigma2"] = fit.sigma2 ? json(*fit.sigma2) : json(nullptr);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["seconds"] = fit.seconds;
  if (kind == EstimatorKind::Qmle) j["loglik"] = fit.loglik;
  j["rmse"] = compute_rmse(fit, d);
  j["diagnostics"] = {{"rho_clipped", fit.diagnostics.rho_clipped},
                      {"damped", fit.diagnostics.damped},
                      {"sigma2_floored", fit.diagnostics.sigma2_floored},
                      {"max_iter_exceeded", fit.diagnostics.max_iter_exceeded},
                      {"halvings", fit.diagnostics.halvings}};
  if (have_se) {
    json se;
    se["rho"] = fit.se[0];
    se["beta"] = to_json(se_beta);
    if (fit.sigma2) se["sigma2"] = fit.se[fit.se.size() - 1];
    j["se"] = se;
    json ci;
    ci["level"] = a.ci_level;
    ci["rho"] = {fit.ci(0, 0), fit.ci(0, 1)};
    json cb = json::array();
    for (Index k = 0; k < p; ++k) cb.push_back({ci_beta(k, 0), ci_beta(k, 1)});
    ci["beta"] = cb;
    if (fit.sigma2) ci["sigma2"] = {fit.ci(fit.ci.rows() - 1, 0), fit.ci(fit.ci.rows() - 1, 1)};
    j["ci"] = ci;
  }
  if (a.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    open_out(a.out) << j.dump(2) << '\n';
  }
  if (!fit.converged) throw Error(ErrorKind::MaxIterExceeded, "estimator did not converge");
}

json report_json(const McReport& r) {
  json out;
  out["n"] = r.config.n;
  out["replicates"] = r.config.replicates;
  out["generator"] = to_string(r.config.generator);
  out["seed"] = r.config.seed;
  for (const auto& s : r.summaries) {
    json e;
    e["succeeded"] = s.succeeded;
    e["failed"] = s.failed;
    e["skip_rate"] = s.skip_rate();
    e["mean_seconds"] = s.mean_seconds;
    for (const auto& m : s.params) {
      auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
      e["params"][m.name] = {{"truth", m.truth}, {"mean", num(m.mean)}, {"bias", num(m.bias)},
                             {"se", num(m.se)},  {"se_hat", num(m.se_hat)}, {"cp", num(m.cp)}};
    }
    out["estimators"][to_string(s.kind)] = e;
  }
  return out;
}

struct McArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string raw;
  std::string report;
  std::string summary;
  int workers = -1;
};

void run_mc_cmd(const McArgs& a) {
  ExperimentConfig cfg = load_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::ConfigError, "--set expects key=value");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.raw.empty()) cfg.raw_output = a.raw;
  if (!a.report.empty()) cfg.report_output = a.report;
  if (a.workers >= 0) cfg.workers = static_cast<unsigned>(a.workers);
  cfg.validate();
  const McReport r = run_mc(cfg);
  if (!cfg.report_output.empty()) open_out(cfg.report_output) << report_json(r).dump(2) << '\n';
  if (!a.summary.empty()) {
    auto out = open_out(a.summary);
    write_summary_csv(out, r);
  } else {
    write_summary_csv(std::cout, r);
  }
}

struct BenchArgs {
  std::string generator = "dyad";
  std::vector<Index> grid{500, 1000, 2000, 4000};
  Index reps = 3;
  std::vector<std::string> estimators{"cle", "cls"};
  std::uint64_t seed = 1;
  std::string out;
};

void run_bench(const BenchArgs& a) {
  BenchConfig cfg;
  cfg.generator = parse_generator(a.generator);
  cfg.grid = a.grid;
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.estimators.clear();
  for (const auto& e : a.estimators) cfg.estimators.push_back(parse_estimator(e));
  const auto rows = bench_timing(cfg);
  if (a.out.empty()) {
    write_bench_csv(std::cout, rows);
  } else {
    auto out = open_out(a.out);
    write_bench_csv(out, rows);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-protected spatial autoregression: simulation, estimation and Monte Carlo"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Simulate a network and noise-added data");
  s->add_option("--generator", sim.generator, "dyad, sbm or powerlaw")->capture_default_str();
  s->add_option("--n", sim.n, "Number of nodes")->capture_default_str();
  s->add_option("--rho", sim.rho)->capture_default_str();
  s->add_option("--beta", sim.beta)->delimiter(',');
  s->add_option("--sigma2", sim.sigma2)->capture_default_str();
  s->add_option("--lambda2", sim.lambda2)->capture_default_str();
  s->add_option("--lambda2-x", sim.lambda2_x)->capture_default_str();
  s->add_option("--protected-cols", sim.protected_cols, "Number of trailing protected covariates")->capture_default_str();
  s->add_option("--noise-law", sim.noise_law)->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--sbm-blocks", sim.sbm_blocks)->capture_default_str();
  s->add_option("--powerlaw-alpha", sim.powerlaw_alpha)->capture_default_str();
  s->add_option("--data-out", sim.data_out)->capture_default_str();
  s->add_option("--edges-out", sim.edges_out)->capture_default_str();

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit an estimator to CSV data");
  f->add_option("--data", fit.data, "node_id,y,x1,... CSV")->required();
  f->add_option("--edges", fit.edges, "src,dst edge list")->required();
  f->add_option("--estimator", fit.estimator, "qmle, cle or cls")->capture_default_str();
  f->add_option("--lambda2", fit.lambda2)->capture_default_str();
  f->add_option("--lambda2-x", fit.lambda2_x)->capture_default_str();
  f->add_option("--protected-cols", fit.protected_cols, "Protected covariates, e.g. x3 or 3")->delimiter(',');
  f->add_option("--noise-law", fit.noise_law)->capture_default_str();
  f->add_option("--bootstrap", fit.bootstrap, "Bootstrap replicates for standard errors")->capture_default_str();
  f->add_option("--bootstrap-mode", fit.bootstrap_mode, "linearized or refit")->capture_default_str();
  f->add_option("--ci-level", fit.ci_level)->capture_default_str();
  f->add_option("--seed", fit.seed)->capture_default_str();
  f->add_option("--out", fit.out, "JSON output path (stdout when empty)");

  McArgs mc;
  auto* m = app.add_subcommand("mc", "Run a Monte Carlo experiment from a config file");
  m->add_option("--config", mc.config)->required();
  m->add_option("--set", mc.overrides, "Override a config key: key=value");
  m->add_option("--raw", mc.raw, "Replicate table CSV");
  m->add_option("--report", mc.report, "Report JSON");
  m->add_option("--summary", mc.summary, "Summary CSV (stdout when empty)");
  m->add_option("--workers", mc.workers, "Worker threads (0: all cores)");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Time CLE and CLS over a grid of N");
  b->add_option("--generator", bench.generator)->capture_default_str();
  b->add_option("--grid", bench.grid)->delimiter(',');
  b->add_option("--reps", bench.reps)->capture_default_str();
  b->add_option("--estimators", bench.estimators)->delimiter(',');
  b->add_option("--seed", bench.seed)->capture_default_str();
  b->add_option("--out", bench.out, "CSV output path (stdout when empty)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*s) run_simulate(sim);
    if (*f) run_fit(fit);
    if (*m) run_mc_cmd(mc);
    if (*b) run_bench(bench);
  } catch (const Error& e) {
    std::cerr << "psar: " << e.what() << '\n';
    return is_config_error(e.kind()) ? kConfigExit : kEstimationExit;
  } catch (const std::exception& e) {
    std::cerr << "psar: " << e.what() << '\n';
    return kEstimationExit;
  }
  return 0;
}

// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers to
// run a subset, e.g. `psar_acceptance 3 4 5`.
#include "../helpers.hpp"
#include "psar/cle.hpp"
#include "psar/cls.hpp"
#include "psar/harness.hpp"
#include "psar/qmle.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace psar;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "MISS ") + what;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

double rel(const Matrix& got, const Matrix& want) {
  return max_abs(got - want) / std::max(max_abs(want), 1e-300);
}

// Monte Carlo runs shared between criteria.
std::map<std::string, McReport> mc_cache;

const McReport& run_cached(const std::string& key, const ExperimentConfig& cfg) {
  auto it = mc_cache.find(key);
  if (it == mc_cache.end()) it = mc_cache.emplace(key, run_mc(cfg)).first;
  return it->second;
}

ExperimentConfig base_config(Index n) {
  ExperimentConfig cfg;
  cfg.n = n;
  cfg.replicates = 200;
  cfg.bootstrap_b = 200;
  cfg.seed = 20240;
  return cfg;
}

const McReport& privacy_grid_run(double lambda2, double lambda2_x) {
  ExperimentConfig cfg = base_config(1000);
  cfg.privacy.lambda2 = lambda2;
  cfg.privacy.lambda2_x = lambda2_x;
  cfg.estimators = {EstimatorKind::Cle};
  if (lambda2 == 0.5 && lambda2_x == 0.5) cfg.estimators.push_back(EstimatorKind::Cls);
  return run_cached(fmt("n1000/%g/%g", lambda2, lambda2_x), cfg);
}

Outcome criterion1() {
  const McReport& rep = run_cached("n500", base_config(500));
  Outcome o;
  const auto& cle = rep.summary(EstimatorKind::Cle);
  const auto& cls = rep.summary(EstimatorKind::Cls);
  const auto& qmle = rep.summary(EstimatorKind::Qmle);
  o.require(cle.param("rho").bias <= 0.015, fmt("CLE bias(rho) %.4f <= 0.015", cle.param("rho").bias));
  o.require(cls.param("rho").bias <= 0.03, fmt("CLS bias(rho) %.4f <= 0.03", cls.param("rho").bias));
  const double qb2 = qmle.param("beta2").bias, qr = qmle.param("rho").bias;
  o.require(std::abs(qb2 - 0.096) <= 0.03, fmt("QMLE bias(beta2) %.4f in 0.096+-0.03", qb2));
  o.require(std::abs(qr - 0.052) <= 0.02, fmt("QMLE bias(rho) %.4f in 0.052+-0.02", qr));
  for (const auto* s : {&cle, &cls}) {
    for (const auto& p : s->params) {
      o.require(p.cp >= 90.0 && p.cp <= 99.0, fmt("%s CP(%s) %.1f in [90,99]", to_string(s->kind), p.name.c_str(), p.cp));
    }
  }
  return o;
}

Outcome criterion2() {
  Outcome o;
  const double target[] = {0.061, 0.076, 0.089};
  const double l2[] = {0.2, 0.5, 0.8};
  double prev = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double v = privacy_grid_run(l2[k], 0.5).summary(EstimatorKind::Cle).param("rho").se_hat;
    if (k > 0) o.require(v > prev, fmt("SE-hat(rho) rises at lambda2=%.1f (%.4f > %.4f)", l2[k], v, prev));
    o.require(std::abs(v / target[k] - 1.0) <= 0.35, fmt("SE-hat(rho) %.4f within 35%% of %.3f", v, target[k]));
    prev = v;
  }
  double b1_lo = 1e300, b1_hi = 0.0, b2_prev = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto& s = privacy_grid_run(0.5, l2[k]).summary(EstimatorKind::Cle);
    const double b1 = s.param("beta1").se_hat, b2 = s.param("beta2").se_hat;
    if (k > 0) o.require(b2 > b2_prev, fmt("SE-hat(beta2) rises at lambda2_x=%.1f (%.4f > %.4f)", l2[k], b2, b2_prev));
    b2_prev = b2;
    b1_lo = std::min(b1_lo, b1);
    b1_hi = std::max(b1_hi, b1);
  }
  o.require(b1_hi / b1_lo - 1.0 < 0.15, fmt("SE-hat(beta1) spread %.1f%% < 15%%", 100.0 * (b1_hi / b1_lo - 1.0)));
  return o;
}

Outcome criterion3() {
  const Index draws = 20000;
  const WeightMatrix w = testing::network(Generator::Dyad, 100, 3);
  const Theta theta{0.2, Vector::Constant(2, 0.3), 1.0};
  const PrivacyConfig privacy{0.5, 0.5, 1, 1, NoiseLaw::Normal};
  const Matrix x = gen_covariates(w.size(), 2, 77);
  const LikelihoodKernel kernel(w, privacy, theta);
  Vector gamma(3);
  gamma << theta.rho, theta.beta;
  const Vector cle_bias = kernel.bias().dS;
  const Vector cls_bias = ls_bias_terms(gamma, w, privacy).dS;

  Matrix cle_scores(draws, 4), cls_scores(draws, 3);
  for (Index r = 0; r < draws; ++r) {
    const auto ur = static_cast<std::uint64_t>(r);
    const TrueData t = simulate_sar(w, theta, x, split_seed(5, ur, 0));
    const ObservedData d = add_privacy_noise(t, privacy, split_seed(5, ur, 1));
    cle_scores.row(r) = kernel.score(d.y_star, d.x_star).transpose();
    cls_scores.row(r) = ls_derivatives(gamma, d.y_star, d.x_star, w, LsLevel::Score).score.transpose();
  }
  Outcome o;
  auto check = [&](const char* name, const Matrix& s, const Vector& bias) {
    const Vector mean = s.colwise().mean().transpose();
    const Vector sd =
        ((s.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / static_cast<double>(draws - 1)).cwiseSqrt();
    double worst = 0.0;
    for (Index k = 0; k < mean.size(); ++k) {
      worst = std::max(worst, std::abs(mean[k] - bias[k]) / (sd[k] / std::sqrt(static_cast<double>(draws))));
    }
    o.require(worst <= 4.0, fmt("%s max |z| %.2f <= 4", name, worst));
  };
  check("CLE", cle_scores, cle_bias);
  check("CLS", cls_scores, cls_bias);
  return o;
}

Outcome criterion4() {
  Outcome o;
  double worst_score = 0.0, worst_hess = 0.0;
  Rng rng = make_rng(404);
  boost::random::uniform_real_distribution<double> rho_u(-0.8, 0.8), beta_u(-1.0, 1.0), s2_u(0.5, 2.0);
  const double h = 1e-5;
  auto fd_grad = [&](const std::function<double(const Vector&)>& f, const Vector& at) {
    Vector g(at.size());
    for (Index k = 0; k < at.size(); ++k) {
      Vector up = at, dn = at;
      const double step = h * std::max(1.0, std::abs(at[k]));
      up[k] += step;
      dn[k] -= step;
      g[k] = (f(up) - f(dn)) / (2 * step);
    }
    return g;
  };
  auto fd_jac = [&](const std::function<Vector(const Vector&)>& f, const Vector& at) {
    Matrix j(at.size(), at.size());
    for (Index k = 0; k < at.size(); ++k) {
      Vector up = at, dn = at;
      const double step = h * std::max(1.0, std::abs(at[k]));
      up[k] += step;
      dn[k] -= step;
      j.col(k) = (f(up) - f(dn)) / (2 * step);
    }
    return j;
  };
  for (Generator g : {Generator::Dyad, Generator::Sbm, Generator::PowerLaw}) {
    const WeightMatrix w = testing::network(g, 100, 11);
    const ObservedData d = testing::simulated(w, 12);
    const LsTraceContext ctx(w);
    for (int point = 0; point < 20; ++point) {
      Vector th(4);
      th << rho_u(rng), beta_u(rng), beta_u(rng), s2_u(rng);
      const Vector gm = th.head(3);
      // Likelihood, its correction potential, and the least-squares pieces.
      const auto nll = [&](const Vector& v) { return neg_loglik(Theta::unpack(v), d); };
      const auto nll_score = [&](const Vector& v) { return score_raw(Theta::unpack(v), d); };
      const auto corr = [&](const Vector& v) {
        return LikelihoodKernel(w, d.privacy, Theta::unpack(v), LikelihoodKernel::Level::Objective).correction();
      };
      const auto corr_grad = [&](const Vector& v) { return bias_terms(Theta::unpack(v), w, d.privacy).dS; };
      const auto lsf = [&](const Vector& v) { return ls_objective(v, d); };
      const auto lss = [&](const Vector& v) { return ls_score_raw(v, d); };
      const auto lsc = [&](const Vector& v) { return ls_correction(v, ctx, d.privacy); };
      const auto lscg = [&](const Vector& v) { return ls_bias_terms(v, ctx, d.privacy).dS; };

      const BiasTermsCLE cb = bias_terms(Theta::unpack(th), w, d.privacy);
      const BiasTermsCLS lb = ls_bias_terms(gm, ctx, d.privacy);
      const double s_err = std::max({rel(score_raw(Theta::unpack(th), d), fd_grad(nll, th)),
                                     rel(cb.dS, fd_grad(corr, th)), rel(ls_score_raw(gm, d), fd_grad(lsf, gm)),
                                     rel(lb.dS, fd_grad(lsc, gm))});
      const double h_err = std::max({rel(hessian_full(Theta::unpack(th), d), fd_jac(nll_score, th)),
                                     rel(cb.dH, fd_jac(corr_grad, th)), rel(ls_hessian_raw(gm, d), fd_jac(lss, gm)),
                                     rel(lb.dH, fd_jac(lscg, gm))});
      worst_score = std::max(worst_score, s_err);
      worst_hess = std::max(worst_hess, h_err);
    }
  }
  o.require(worst_score <= 1e-5, fmt("worst score rel err %.2e <= 1e-5", worst_score));
  o.require(worst_hess <= 1e-4, fmt("worst Hessian rel err %.2e <= 1e-4", worst_hess));
  return o;
}

Outcome criterion5() {
  Outcome o;
  // Least-squares objective against the conditional-expectation sum.
  double worst_id = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Index n = 3 + static_cast<Index>(seed % 8);
    const WeightMatrix w = testing::small_random(n, seed, 0.4);
    const ObservedData d = testing::simulated(w, seed);
    Vector gamma(3);
    gamma << -0.6 + 0.06 * static_cast<double>(seed), 0.4, -0.3;
    const double rho = gamma[0];
    const Matrix s = Matrix::Identity(n, n) - rho * w.dense();
    const Vector mu = s.partialPivLu().solve(d.x_star * gamma.tail(2));
    double direct = 0.0;
    for (Index i = 0; i < n; ++i) {
      double cond = mu[i];
      for (Index j = 0; j < n; ++j) {
        if (j != i) cond += alpha_weights(w, rho, i, j) * (d.y_star[j] - mu[j]);
      }
      direct += (d.y_star[i] - cond) * (d.y_star[i] - cond);
    }
    worst_id = std::max(worst_id, std::abs(ls_objective(gamma, d) - direct) / std::max(1.0, direct));
  }
  o.require(worst_id <= 1e-9, fmt("identity rel err %.2e <= 1e-9", worst_id));

  double worst_tr = 0.0, worst_ld = 0.0;
  const std::vector<WeightMatrix> nets{testing::network(Generator::Dyad, 100, 1),
                                       testing::network(Generator::Sbm, 100, 2),
                                       testing::network(Generator::PowerLaw, 100, 3),
                                       testing::small_random(60, 4, 0.08)};
  for (const WeightMatrix& w : nets) {
    const Index n = w.size();
    const Matrix wd = w.dense();
    const Matrix eye = Matrix::Identity(n, n);
    const LsTraceContext ctx(w);
    const Eigen::VectorXcd w_eig = Eigen::EigenSolver<Matrix>(wd).eigenvalues();
    for (double rho : {-0.7, -0.2, 0.0, 0.35, 0.9}) {
      const auto all = ctx.evaluate(rho);
      for (std::size_t k = 0; k < kTraceSpecCount; ++k) {
        const auto spec = static_cast<TraceSpec>(k);
        const double want = testing::dense_trace(wd, rho, spec);
        worst_tr = std::max({worst_tr, testing::rel_err(all[k], want),
                             testing::rel_err(sparse_trace_products(ctx, rho, spec), want)});
      }
      const Matrix s = eye - rho * wd;
      const Matrix g = s.transpose() * s;
      worst_tr = std::max(worst_tr, testing::rel_err(Matrix(ctx.g2_diag(rho)), Matrix((g * g).diagonal())));

      // Likelihood traces and Omega products.
      const Theta theta{rho, Vector::Constant(2, 0.3), 0.9};
      const PrivacyConfig privacy{0.6, 0.4, 1, 1, NoiseLaw::Normal};
      const LikelihoodKernel k(w, privacy, theta);
      const Matrix omega = 0.9 * eye + 0.6 * s * s.transpose();
      const Matrix m = omega.inverse();
      const Matrix gs = s.partialPivLu().solve(wd);
      worst_tr = std::max({worst_tr, testing::rel_err(k.tr_s_inv_w(), gs.trace()),
                           testing::rel_err(k.tr_s_inv_w_sq(), (gs * gs).trace()),
                           testing::rel_err(k.tr_omega_inv(), m.trace())});
      const SpMat ws = (wd * s.transpose() + s * wd.transpose()).sparseView();
      const SpMat wwt = (wd * wd.transpose()).sparseView();
      for (Index cutoff : {kDenseOmegaCutoff, Index{0}}) {
        const OmegaMatrix o(w, rho, 0.9, 0.6, cutoff);
        const SpMat one[] = {ws};
        const SpMat two[] = {ws, wwt};
        worst_tr = std::max({worst_tr, testing::rel_err(trace_omega_inv_prod(o, one), (m * Matrix(ws)).trace()),
                             testing::rel_err(trace_omega_inv_prod(o, two),
                                              (m * Matrix(ws) * m * Matrix(wwt)).trace())});
        const double ld_omega = Eigen::SelfAdjointEigenSolver<Matrix>(omega).eigenvalues().array().log().sum();
        worst_ld = std::max(worst_ld, testing::rel_err(logdet_omega(o), ld_omega));
      }

      // log|det S| against eigenvalues of W and dense LU, on both factorization paths.
      double ld_eig = 0.0;
      for (Index i = 0; i < n; ++i) ld_eig += std::log(std::abs(1.0 - rho * w_eig[i]));
      const double ld_lu = s.partialPivLu().matrixLU().diagonal().array().abs().log().sum();
      for (double got : {logdet_s(SMatrix(w, rho)), SFactor(w, rho).log_abs_det(), SFactor(w, rho, 0).log_abs_det()}) {
        worst_ld = std::max({worst_ld, testing::rel_err(got, ld_eig), testing::rel_err(got, ld_lu)});
      }
    }
  }
  o.require(worst_tr <= 1e-8, fmt("trace rel err %.2e <= 1e-8", worst_tr));
  o.require(worst_ld <= 1e-8, fmt("log-det rel err %.2e <= 1e-8", worst_ld));
  return o;
}

Outcome criterion6() {
  double worst_cle = 0.0, worst_cls = 0.0, worst_corr = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const WeightMatrix w = testing::network(Generator::Dyad, 500, seed);
    const ObservedData d = testing::simulated(w, 100 + seed, 0.0, 0.0);
    const QmleFit q = fit_qmle(d);
    const FitResult cle = fit_cle(d);
    const FitResult ls = fit_ls(d);
    const FitResult cls = fit_cls(d);
    worst_cle = std::max(worst_cle, max_abs(cle.point() - q.theta_hat.pack()));
    worst_cls = std::max(worst_cls, max_abs(cls.gamma() - ls.gamma()));
    const BiasTermsCLE cb = bias_terms(cle.theta(), w, d.privacy);
    const BiasTermsCLS lb = ls_bias_terms(cls.gamma(), w, d.privacy);
    const double corr = LikelihoodKernel(w, d.privacy, cle.theta(), LikelihoodKernel::Level::Objective).correction();
    worst_corr = std::max({worst_corr, max_abs(cb.dS), max_abs(cb.dH), max_abs(lb.dS), max_abs(lb.dH),
                           std::abs(corr), std::abs(ls_correction(cls.gamma(), LsTraceContext(w), d.privacy))});
  }
  Outcome o;
  o.require(worst_cle <= 1e-4, fmt("max |CLE - QMLE| %.2e <= 1e-4", worst_cle));
  o.require(worst_cls <= 1e-4, fmt("max |CLS - LS| %.2e <= 1e-4", worst_cls));
  o.require(worst_corr == 0.0, fmt("largest correction term %.1e == 0", worst_corr));
  return o;
}

Outcome criterion7() {
  Outcome o;
  const McReport& rep = privacy_grid_run(0.5, 0.5);
  const double cle_se = rep.summary(EstimatorKind::Cle).param("rho").se;
  const double cls_se = rep.summary(EstimatorKind::Cls).param("rho").se;
  o.require(cle_se <= 1.05 * cls_se, fmt("N=1000 SE(rho) CLE %.4f <= 1.05 x CLS %.4f", cle_se, cls_se));

  BenchConfig bc;
  bc.reps = 1;
  bc.seed = 7;
  const auto rows = bench_timing(bc);
  double cle2000 = 0.0, cls2000 = 0.0;
  for (const auto& r : rows) {
    if (r.n != 2000) continue;
    (r.kind == EstimatorKind::Cle ? cle2000 : cls2000) = r.mean_seconds;
  }
  o.require(cle2000 / cls2000 >= 5.0, fmt("N=2000 time ratio %.1f >= 5 (%.2fs / %.3fs)", cle2000 / cls2000, cle2000, cls2000));
  const double s_cle = log_log_slope(rows, EstimatorKind::Cle), s_cls = log_log_slope(rows, EstimatorKind::Cls);
  o.require(s_cls < s_cle, fmt("log-log slope CLS %.2f < CLE %.2f", s_cls, s_cle));
  return o;
}

Outcome criterion8() {
  ExperimentConfig cfg = base_config(2000);
  cfg.estimators = {EstimatorKind::Cls};
  cfg.perturb_s = 0.3;
  const auto& p = run_cached("perturbed", cfg).summary(EstimatorKind::Cls).param("rho");
  Outcome o;
  o.require(p.bias <= 0.03, fmt("CLS bias(rho) %.4f <= 0.03", p.bias));
  o.require(p.cp >= 89.0 && p.cp <= 99.0, fmt("CLS CP(rho) %.1f in [89,99]", p.cp));
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion9() {
  Outcome o;
  ExperimentConfig cfg;
  cfg.n = 200;
  cfg.replicates = 8;
  cfg.bootstrap_b = 20;
  cfg.seed = 99;
  std::vector<std::string> tables;
  for (unsigned workers : {1u, 2u, 4u, 1u}) {
    cfg.workers = workers;
    std::ostringstream out;
    write_raw_table(out, run_mc(cfg));
    tables.push_back(out.str());
  }
  bool same = true;
  for (const auto& t : tables) same = same && t == tables.front();
  o.require(same, "library raw tables identical for 1, 2, 4, 1 workers");

  const auto dir = std::filesystem::temp_directory_path() / "psar_acceptance_c9";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "mc.cfg");
    f << "generator = sbm\nn = 150\nreplicates = 6\nbootstrap_b = 20\nseed = 5\nperturb_s = 0.2\n";
  }
  std::vector<std::string> files;
  for (int workers : {1, 3, 1}) {
    const auto raw = dir / ("raw" + std::to_string(files.size()) + ".csv");
    const std::string cmd = std::string(PSAR_CLI_PATH) + " mc --config " + (dir / "mc.cfg").string() + " --raw " +
                            raw.string() + " --workers " + std::to_string(workers) + " --summary " +
                            (dir / "summary.csv").string() + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    o.require(WIFEXITED(status) && WEXITSTATUS(status) == 0, fmt("cli run with %d workers exits 0", workers));
    files.push_back(slurp(raw));
  }
  o.require(!files[0].empty() && files[0] == files[1] && files[0] == files[2], "cli raw files byte-identical");
  std::filesystem::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) {
    for (int i = 1; i <= 9; ++i) which.push_back(i);
  }
  bool all = true;
  for (int c : which) {
    if (c < 1 || c > 9) {
      std::fprintf(stderr, "no criterion %d\n", c);
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(c - 1)]();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s (%.0fs) %s\n", c, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

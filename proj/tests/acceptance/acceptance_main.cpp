// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "fairmi/basis.hpp"
#include "fairmi/data.hpp"
#include "fairmi/experiments.hpp"
#include "fairmi/fairreg.hpp"
#include "fairmi/infometrics.hpp"
#include "fairmi/lspc.hpp"
#include "fairmi/oracle.hpp"

using namespace fairmi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = nd(rng);
  return m;
}

ClassVector classes(Eigen::Index n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, k - 1);
  ClassVector a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = i < k ? static_cast<int>(i) : u(rng);
  return a;
}

Dataset random_dataset(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.features = gaussian(n, p, rng);
  ds.sensitive = classes(n, 2, rng);
  ds.target = ds.features * gaussian(p, 1, rng) + 0.3 * gaussian(n, 1, rng);
  for (Eigen::Index i = 0; i < n; ++i) ds.target[i] += 0.5 * ds.sensitive[i];
  for (Eigen::Index j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.class_labels = {"0", "1"};
  ds.standardisation = Standardisation::identity(p);
  return ds;
}

Scenario s_only(double p, double m0, double m1, double v0, double v1) {
  Scenario sc;
  sc.p = p;
  sc.mean0 << 0.0, m0;
  sc.mean1 << 0.0, m1;
  sc.cov0 << 1.0, 0.0, 0.0, v0;
  sc.cov1 << 1.0, 0.0, 0.0, v1;
  return sc;
}

// int sum_a p(a) p(s|a) log(p(s|a) / p(s)) ds by adaptive Gauss-Kronrod.
double quadrature_mi(const Scenario& sc) {
  const auto npdf = [](double x, double mu, double var) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
  };
  const auto f = [&](double s) {
    const double q0 = npdf(s, sc.mean0[1], sc.cov0(1, 1));
    const double q1 = npdf(s, sc.mean1[1], sc.cov1(1, 1));
    const double ps = (1 - sc.p) * q0 + sc.p * q1;
    double v = 0;
    if (q0 > 0) v += (1 - sc.p) * q0 * std::log(q0 / ps);
    if (q1 > 0) v += sc.p * q1 * std::log(q1 / ps);
    return v;
  };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-12);
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

// Per-lambda means over folds, ordered by lambda.
struct FrontierMeans {
  std::vector<double> lambda, r2, nmi_ind, nmi_sep;
};

FrontierMeans means_by_lambda(const std::vector<SweepRow>& rows) {
  std::map<double, std::vector<const FrontierPoint*>> by;
  for (const auto& r : rows) by[r.point.lambda_f].push_back(&r.point);
  FrontierMeans m;
  for (const auto& [l, pts] : by) {
    double r2 = 0, ind = 0, sep = 0;
    for (const auto* p : pts) {
      r2 += p->r2;
      ind += p->nmi_ind;
      sep += p->nmi_sep;
    }
    const double c = static_cast<double>(pts.size());
    m.lambda.push_back(l);
    m.r2.push_back(r2 / c);
    m.nmi_ind.push_back(ind / c);
    m.nmi_sep.push_back(sep / c);
  }
  return m;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt("%.4f", v[i]);
  return s;
}

bool sweep_errors(const std::vector<SweepRow>& rows, std::string& detail) {
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      detail = "sweep job failed: " + r.error;
      return true;
    }
  }
  return false;
}

SweepSpec frontier_spec(const std::string& regulariser) {
  SweepSpec spec;
  spec.lambdas = {0.0, 0.1, 1.0, 10.0, 100.0};
  spec.folds = 5;
  spec.seed = 11;
  spec.lambda_w = 1e-3;
  spec.training.regulariser = parse_regulariser(regulariser);
  spec.eval_backend = LrRksBackend{};
  return spec;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  double worst = 0, slowest = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = random_dataset(500, 10, 1000 + seed);
    TrainingConfig cfg;
    cfg.lambda_w = 0.01 * static_cast<double>(seed + 1);
    cfg.init = InitKind::Random;
    cfg.init_seed = seed;
    cfg.optimiser.grad_tol = 1e-9;
    const auto t0 = Clock::now();
    const TrainedModel m = train(ds, cfg);
    slowest = std::max(slowest, seconds_since(t0));
    // Independent oracle: augmented least squares solved by Householder QR.
    const Eigen::Index n = ds.n(), p = ds.p();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + p, p + 1);
    aug.topLeftCorner(n, p) = ds.features;
    aug.topRightCorner(n, 1).setOnes();
    aug.bottomLeftCorner(p, p) =
        std::sqrt(static_cast<double>(n) * cfg.lambda_w) * Eigen::MatrixXd::Identity(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
    rhs.head(n) = ds.target;
    const Eigen::VectorXd ridge = aug.colPivHouseholderQr().solve(rhs);
    worst = std::max(worst, (m.theta - ridge).lpNorm<Eigen::Infinity>());
  }
  return {worst < 1e-5 && slowest < 1.0,
          fmt("max |dtheta|_inf = %.3g (< 1e-5), slowest fit %.4f s (< 1 s)", worst, slowest)};
}

Outcome criterion2() {
  double worst = 0, worst_rows = 0;
  std::mt19937_64 rng(2);
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::Index n = 200 + 40 * inst;
    const int k = 2 + inst % 4;
    const Eigen::Index dz = 1 + inst % 3;
    const BasisSpec basis = inst % 2 == 0 ? BasisSpec::identity(dz + 1) : BasisSpec::feature_cross(dz + 1);
    Eigen::MatrixXd z(n, dz + 1);
    z << Eigen::VectorXd::Ones(n), gaussian(n, dz, rng);
    const ClassVector a = classes(n, k, rng);
    const double lambda_c = std::pow(10.0, -4.0 + inst % 5);
    const Eigen::MatrixXd phi = expand(basis, z);
    const Eigen::MatrixXd w = lspc_fit(phi, a, k, lambda_c);
    // Normal equations in long double, solved by full-pivot LU.
    using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const MatL pl = phi.cast<long double>();
    MatL gram = pl.transpose() * pl;
    gram.diagonal().array() += static_cast<long double>(lambda_c) * static_cast<long double>(n);
    MatL t = MatL::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) t(i, a[i]) = 1.0L;
    const MatL wl = gram.fullPivLu().solve(pl.transpose() * t).transpose();
    const Eigen::MatrixXd ref = wl.cast<double>();
    worst = std::max(worst, (w - ref).norm() / ref.norm());
    LspcModel<double> model;
    model.basis = basis;
    model.weights = w;
    const Eigen::MatrixXd post = posteriors<double>(model, z);
    worst_rows = std::max(worst_rows, (post.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }
  return {worst < 1e-8 && worst_rows <= 1e-12,
          fmt("max relative Frobenius error %.3g (< 1e-8), max |row sum - 1| %.3g (<= 1e-12)",
              worst, worst_rows)};
}

Outcome criterion3() {
  std::vector<std::string> regs;
  for (const char* c : {"ind", "sep", "suf"})
    for (const char* b : {"linear", "quad"}) regs.push_back(std::string("lspc-") + c + "-" + b);
  regs.push_back("berk-group");
  regs.push_back("berk-individual");
  double worst = 0;
  std::string worst_id;
  int checked = 0;
  for (const auto& reg : regs) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Dataset ds = random_dataset(200, 5, 300 + seed);
      TrainingConfig cfg;
      cfg.regulariser = parse_regulariser(reg);
      cfg.lambda_f = 1.5;
      cfg.lambda_w = 0.02;
      std::mt19937_64 rng(500 + seed);
      const Eigen::VectorXd theta = 0.5 * gaussian(6, 1, rng);
      const Eigen::VectorXd g = loss_gradient(theta, ds, cfg);
      const Eigen::VectorXd fd = central_difference(
          [&](const Eigen::VectorXd& t) { return total_loss(t, ds, cfg); }, theta, 1e-5);
      const double rel = (g - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>();
      ++checked;
      if (rel > worst) {
        worst = rel;
        worst_id = reg;
      }
    }
  }
  return {worst < 1e-5, fmt("%d instances (N=200), max relative error %.3g at %s (< 1e-5)", checked,
                            worst, worst_id.c_str())};
}

Outcome criterion4() {
  SynthEvalSpec spec;
  spec.estimators = {"lspc-quad", "logistic-quad"};
  const auto t0 = Clock::now();
  const auto rows = run_synth_eval(spec, 1);
  const double elapsed = seconds_since(t0);
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by;
  for (const auto& r : rows) {
    if (r.estimator_id == "mc-oracle") continue;
    if (!r.error.empty()) return {false, "estimator failed: " + r.error};
    by[r.estimator_id].first.push_back(r.oracle_mi / r.oracle_normaliser);
    by[r.estimator_id].second.push_back(r.nmi);
  }
  bool pass = elapsed < 600.0;
  std::string detail;
  for (const auto& [id, v] : by) {
    double mae = 0;
    for (std::size_t i = 0; i < v.first.size(); ++i) mae += std::abs(v.first[i] - v.second[i]);
    mae /= static_cast<double>(v.first.size());
    const double rho = spearman(v.first, v.second);
    pass = pass && rho >= 0.9 && mae <= 0.07 && v.first.size() == 100;
    detail += fmt("%s: n=%zu rho=%.4f (>= 0.9) MAE=%.4f (<= 0.07); ", id.c_str(), v.first.size(),
                  rho, mae);
  }
  return {pass && by.size() == 2, detail + fmt("runtime %.1f s (< 600 s)", elapsed)};
}

Outcome criterion5() {
  const Eigen::Index n = 10000;
  std::mt19937_64 rng(5);
  const ClassVector a = classes(n, 2, rng);
  const Eigen::VectorXd y = gaussian(n, 1, rng);
  const Eigen::VectorXd s_ind = gaussian(n, 1, rng);
  const Eigen::VectorXd s_eq = a.cast<double>();
  const EstimatorBackend quad = LspcBackend{BasisKind::FeatureCross, {}};
  const double nmi0 = estimate_nmi(Criterion::Independence, y, s_ind, a, quad).nmi;
  const double nmi1 = estimate_nmi(Criterion::Independence, y, s_eq, a, quad).nmi;
  return {std::abs(nmi0) < 0.02 && nmi1 > 0.9,
          fmt("independent S: |nmi| = %.4g (< 0.02); S = A: nmi = %.4f (> 0.9)", std::abs(nmi0),
              nmi1)};
}

Outcome criterion6() {
  // Every batch an optimiser visits: score vectors along random training paths.
  double worst = 0;
  int batches = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset ds = random_dataset(300, 4, 600 + seed);
    std::mt19937_64 rng(700 + seed);
    for (const auto basis : {BasisKind::Identity, BasisKind::FeatureCross}) {
      const LspcEntropic suf{Criterion::Sufficiency, basis, {}};
      TrainingConfig cfg;
      cfg.regulariser = suf;
      cfg.lambda_f = 1.0;
      cfg.lambda_w = 0.01;
      cfg.init = InitKind::Random;
      cfg.init_seed = seed;
      FairObjective obj(ds, cfg);
      Eigen::VectorXd theta = gaussian(ds.p() + 1, 1, rng);
      for (int step = 0; step < 10; ++step) {
        const Eigen::VectorXd s = predict_scores(theta, ds.features);
        const auto terms = lspc_entropic_terms(suf, ds.target, s, ds.sensitive, 2);
        const double l_suf =
            fairness_penalty(suf, ds.target, s, ds.sensitive, 2, false, nullptr).value;
        worst = std::max(worst, std::abs(l_suf - (terms.l_sep - terms.l_ind)));
        ++batches;
        Eigen::VectorXd g;
        obj(theta, g);
        theta -= 0.1 * g;
      }
    }
  }
  return {worst <= 1e-12, fmt("%d batches, max |l_suf - (l_sep - l_ind)| = %.3g (<= 1e-12)", batches,
                              worst)};
}

bool monotone_within(const std::vector<double>& v, double tol) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1] + tol) return false;
  return true;
}

Outcome criterion7() {
  BiasedRegressionSpec bias;
  const Dataset ds = make_biased_regression(2000, bias, 7);
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;
  for (const auto& [reg, which] : {std::pair<std::string, int>{"lspc-ind-quad", 0}, {"lspc-sep-quad", 1}}) {
    const auto rows = run_sweep(ds, frontier_spec(reg), 1);
    if (sweep_errors(rows, detail)) return {false, detail};
    const FrontierMeans m = means_by_lambda(rows);
    const auto& nmi = which == 0 ? m.nmi_ind : m.nmi_sep;
    const bool ok = monotone_within(nmi, 0.02) && nmi.back() < 0.05 && monotone_within(m.r2, 0.0);
    pass = pass && ok;
    detail += fmt("%s: %s=[%s] R2=[%s]; ", reg.c_str(), which == 0 ? "nmi_ind" : "nmi_sep",
                  join(nmi).c_str(), join(m.r2).c_str());
  }
  const double elapsed = seconds_since(t0);
  return {pass && elapsed < 300.0, detail + fmt("runtime %.1f s (< 300 s)", elapsed)};
}

Outcome criterion8() {
  BenchSpec spec;
  BiasedRegressionSpec bias;
  const Dataset ds = make_biased_regression(spec.sizes.back(), bias, spec.seed);
  const auto rows = run_bench(ds, spec);
  const auto summary = summarise_bench(rows);
  bool pass = true;
  std::string detail;
  std::map<Eigen::Index, double> fastest_berk, slowest_lspc;
  for (const auto& s : summary) {
    const bool berk = s.method.rfind("berk", 0) == 0;
    std::vector<double> n, t;
    for (const auto& [size, ms] : s.median_ms) {
      n.push_back(static_cast<double>(size));
      t.push_back(ms);
      auto& slot = berk ? fastest_berk[size] : slowest_lspc[size];
      slot = berk ? (slot == 0 ? ms : std::min(slot, ms)) : std::max(slot, ms);
    }
    const double per_fit = n.size() >= 2 ? loglog_slope(n, t) : std::nan("");
    const double target = berk ? 2.0 : 1.0;
    pass = pass && std::abs(s.slope - target) <= 0.3;
    detail += fmt("%s slope/eval=%.2f slope/fit=%.2f (%.1f +- 0.3); ", s.method.c_str(), s.slope,
                  per_fit, target);
  }
  for (const auto& [size, berk_ms] : fastest_berk) {
    if (size < 4000) continue;
    const auto it = slowest_lspc.find(size);
    const bool faster = it != slowest_lspc.end() && it->second < berk_ms;
    pass = pass && faster;
    detail += fmt("N=%lld lspc max %.0f ms vs berk min %.0f ms; ", static_cast<long long>(size),
                  it == slowest_lspc.end() ? std::nan("") : it->second, berk_ms);
  }
  for (const auto& r : rows) {
    if (r.status == "timeout" || r.status == "skipped" || r.status.rfind("error", 0) == 0) {
      pass = false;
      detail += r.method + " N=" + std::to_string(r.n) + " status " + r.status + "; ";
      break;
    }
  }
  return {pass && !summary.empty(), detail};
}

Outcome criterion9() {
  BiasedRegressionSpec bias;
  const Dataset ds = make_biased_regression(5000, bias, 9);
  const auto lspc = run_sweep(ds, frontier_spec("lspc-ind-quad"), 1);
  const auto lr = run_sweep(ds, frontier_spec("lr-ind-quad"), 1);
  std::string detail;
  if (sweep_errors(lspc, detail) || sweep_errors(lr, detail)) return {false, detail};
  std::vector<double> r2a, r2b, nmia, nmib;
  double ta = 0, tb = 0;
  for (std::size_t i = 0; i < lspc.size(); ++i) {
    r2a.push_back(lspc[i].point.r2);
    r2b.push_back(lr[i].point.r2);
    nmia.push_back(lspc[i].point.nmi_ind);
    nmib.push_back(lr[i].point.nmi_ind);
    ta += lspc[i].point.train_seconds;
    tb += lr[i].point.train_seconds;
  }
  const double rho_r2 = spearman(r2a, r2b), rho_nmi = spearman(nmia, nmib);
  return {rho_r2 > 0.95 && rho_nmi > 0.95 && tb >= 3.0 * ta,
          fmt("%zu frontier points: rho(R2)=%.4f rho(nmi)=%.4f (> 0.95); training time LSPC %.2f s, "
              "LogisticQuad %.2f s, ratio %.1f (>= 3)",
              lspc.size(), rho_r2, rho_nmi, ta, tb, tb / ta)};
}

Outcome criterion10() {
  const std::vector<Scenario> scenarios = {s_only(0.5, -1, 1, 1, 1), s_only(0.3, -0.5, 1.0, 1.0, 2.0),
                                           s_only(0.5, 0, 0, 1, 4), s_only(0.2, 0, 2, 1, 1),
                                           s_only(0.7, -2, 0.5, 0.5, 1.5)};
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const double q = quadrature_mi(scenarios[i]);
    const auto mc = monte_carlo_mi(scenarios[i], OracleTarget::ScoreSensitive, 1000000, 40 + i);
    const double z = std::abs(mc.value - q) / mc.std_error;
    pass = pass && z < 3.0;
    detail += fmt("[%.4f vs %.4f, %.2f se] ", mc.value, q, z);
  }
  return {pass, detail + "(< 3 se)"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"ridge-oracle equivalence", criterion1},
      {"LSPC solver equivalence", criterion2},
      {"gradient suite", criterion3},
      {"MI-estimator fidelity", criterion4},
      {"independence anchors", criterion5},
      {"sufficiency identity", criterion6},
      {"frontier property", criterion7},
      {"scaling", criterion8},
      {"LSPC / logistic parity", criterion9},
      {"MC-oracle self-check", criterion10},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu (%s): %s  %s  [%.1f s]\n", i + 1, criteria[i].first.c_str(),
                o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}

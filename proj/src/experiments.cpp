#include "fairmi/experiments.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "fairmi/errors.hpp"
#include "fairmi/model_io.hpp"
#include "fairmi/svg.hpp"

namespace fairmi {

// ---------------------------------------------------------------------------
// Small utilities

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope: need >= 2 points");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(x.size()), 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    design(static_cast<Eigen::Index>(i), 1) = std::log(x[i]);
    rhs[static_cast<Eigen::Index>(i)] = std::log(y[i]);
  }
  return design.colPivHouseholderQr().solve(rhs)[1];
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("spearman: need >= 2 paired values");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(rx.data(), n).array() - (n + 1) / 2.0;
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(ry.data(), n).array() - (n + 1) / 2.0;
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? a.dot(b) / denom : 0.0;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::string header_comment(const std::string& schema) {
  return "# fairmi " + schema + " schema=1 version=" FAIRMI_VERSION "\n";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// Data sources and model selection

Dataset load_data_source(const nlohmann::json& source, const std::filesystem::path& base_dir) {
  if (!source.is_object()) throw ConfigError("data: expected an object");
  try {
    if (source.contains("csv")) {
      std::filesystem::path path = source["csv"].get<std::string>();
      if (path.is_relative()) path = base_dir / path;
      CsvSchema schema;
      if (source.contains("schema")) {
        schema = CsvSchema::from_json_text(source["schema"].dump());
      } else if (source.contains("schema_path")) {
        std::filesystem::path sp = source["schema_path"].get<std::string>();
        schema = CsvSchema::load(sp.is_relative() ? base_dir / sp : sp);
      } else {
        throw ConfigError("data: 'csv' requires 'schema' or 'schema_path'");
      }
      Dataset ds = load_csv(path, schema);
      if (source.contains("subsample")) {
        ds = subsample(ds, source["subsample"].get<Eigen::Index>(), source.value("seed", std::uint64_t{0}));
      }
      return ds;
    }
    if (source.contains("synthetic")) {
      const auto& s = source["synthetic"];
      BiasedRegressionSpec spec;
      spec.n_features = s.value("n_features", spec.n_features);
      spec.base_rate = s.value("base_rate", spec.base_rate);
      spec.proxy_strength = s.value("proxy_strength", spec.proxy_strength);
      spec.target_shift = s.value("target_shift", spec.target_shift);
      spec.noise = s.value("noise", spec.noise);
      return make_biased_regression(s.value("n", Eigen::Index{2000}), spec,
                                    s.value("seed", std::uint64_t{0}));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  throw ConfigError("data: expected 'csv' or 'synthetic'");
}

double select_lambda_w(const Dataset& ds, const std::vector<double>& grid, int folds,
                       std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("select_lambda_w: empty grid");
  const FoldAssignment fa = kfold(ds.n(), folds, seed);
  double best = grid.front();
  double best_r2 = -std::numeric_limits<double>::infinity();
  for (const double lw : grid) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      const Dataset tr = ds.rows(fa.train_indices(f));
      const Dataset te = ds.rows(fa.test_indices(f));
      const Eigen::VectorXd theta = ridge_solution(tr.features, tr.target, lw);
      total += r_squared(te.target, predict_scores(theta, te.features));
    }
    const double mean_r2 = total / folds;
    if (mean_r2 > best_r2 + 1e-12) {
      best_r2 = mean_r2;
      best = lw;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// sweep

SweepSpec SweepSpec::from_json(const nlohmann::json& j) {
  SweepSpec s;
  try {
    s.lambdas = j.value("sweep", std::vector<double>{0.0});
    s.folds = j.value("folds", s.folds);
    s.seed = j.value("seed", s.seed);
    if (j.contains("lambda_w") && j["lambda_w"].is_number()) s.lambda_w = j["lambda_w"].get<double>();
    if (j.contains("lambda_w") && j["lambda_w"].is_string() && j["lambda_w"] != "cv") {
      throw ConfigError("sweep: lambda_w must be a number or \"cv\"");
    }
    s.training = training_config_from_json(j);
    s.eval_backend = parse_backend(j.value("eval_backend", std::string("lr-rks")));
    if (j.contains("eval_params")) {
      if (auto* r = std::get_if<LrRksBackend>(&s.eval_backend)) {
        const auto& p = j["eval_params"];
        r->params.n_features = p.value("n_features", r->params.n_features);
        r->params.bandwidth = p.value("bandwidth", r->params.bandwidth);
        r->params.lambda_c = p.value("lambda_c", r->params.lambda_c);
        r->params.seed = p.value("seed", r->params.seed);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep config: ") + e.what());
  }
  if (s.lambdas.empty()) throw ConfigError("sweep: 'sweep' must be non-empty");
  if (!std::is_sorted(s.lambdas.begin(), s.lambdas.end())) {
    throw ConfigError("sweep: 'sweep' must be sorted ascending");
  }
  for (double l : s.lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("sweep: lambda_f must be finite and >= 0");
  }
  if (s.folds < 2) throw ConfigError("sweep: folds must be >= 2");
  return s;
}

std::vector<SweepRow> run_sweep(const Dataset& ds, const SweepSpec& spec, int jobs) {
  const FoldAssignment folds = kfold(ds.n(), spec.folds, spec.seed);
  std::vector<double> fold_lambda_w(static_cast<std::size_t>(spec.folds));
  for (int f = 0; f < spec.folds; ++f) {
    fold_lambda_w[f] = spec.lambda_w.has_value()
                           ? *spec.lambda_w
                           : select_lambda_w(ds.rows(folds.train_indices(f)), kDefaultLambdaWGrid,
                                             std::min(spec.folds, 5), mix_seed(spec.seed, 7, f));
  }

  const std::size_t n_jobs = spec.lambdas.size() * static_cast<std::size_t>(spec.folds);
  std::vector<SweepRow> rows(n_jobs);
  parallel_for(n_jobs, jobs, [&](std::size_t idx) {
    const std::size_t li = idx / static_cast<std::size_t>(spec.folds);
    const int fold = static_cast<int>(idx % static_cast<std::size_t>(spec.folds));
    SweepRow& row = rows[idx];
    row.point.lambda_f = spec.lambdas[li];
    row.point.fold = fold;
    row.lambda_w = fold_lambda_w[fold];
    TrainingConfig cfg = spec.training;
    cfg.lambda_f = spec.lambdas[li];
    cfg.lambda_w = row.lambda_w;
    try {
      row.point = evaluate_fold(ds, folds, fold, cfg, spec.eval_backend);
    } catch (const std::exception& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.point.r2 = row.point.nmi_ind = row.point.nmi_sep = row.point.nmi_suf = nan;
      row.error = e.what();
    }
  });
  return rows;
}

std::string frontier_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream o;
  o << header_comment("frontier");
  o << "lambda_f,fold,r2,nmi_ind,nmi_sep,nmi_suf,train_seconds,status\n";
  for (const auto& r : rows) {
    const auto& p = r.point;
    o << fmt(p.lambda_f) << ',' << p.fold << ',' << fmt(p.r2) << ',' << fmt(p.nmi_ind) << ','
      << fmt(p.nmi_sep) << ',' << fmt(p.nmi_suf) << ',' << fmt(p.train_seconds) << ','
      << csv_escape(r.error.empty() ? "ok" : "error: " + r.error) << '\n';
  }
  return o.str();
}

std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
  std::map<double, std::vector<const SweepRow*>> by_lambda;
  for (const auto& r : rows) by_lambda[r.point.lambda_f].push_back(&r);
  const auto stats = [](const std::vector<double>& v) {
    std::vector<double> ok;
    for (double x : v) {
      if (std::isfinite(x)) ok.push_back(x);
    }
    if (ok.empty()) return std::pair{std::numeric_limits<double>::quiet_NaN(), 0.0};
    const double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / ok.size();
    double var = 0.0;
    for (double x : ok) var += (x - mean) * (x - mean);
    return std::pair{mean, ok.size() > 1 ? std::sqrt(var / (ok.size() - 1)) : 0.0};
  };
  std::ostringstream o;
  o << header_comment("frontier-summary");
  o << "lambda_f,n_ok,r2_mean,r2_std,nmi_ind_mean,nmi_ind_std,nmi_sep_mean,nmi_sep_std,"
       "nmi_suf_mean,nmi_suf_std\n";
  for (const auto& [lambda, rs] : by_lambda) {
    std::vector<double> r2, ind, sep, suf;
    int ok = 0;
    for (const auto* r : rs) {
      if (r->error.empty()) ++ok;
      r2.push_back(r->point.r2);
      ind.push_back(r->point.nmi_ind);
      sep.push_back(r->point.nmi_sep);
      suf.push_back(r->point.nmi_suf);
    }
    o << fmt(lambda) << ',' << ok;
    for (const auto* v : {&r2, &ind, &sep, &suf}) {
      const auto [m, s] = stats(*v);
      o << ',' << fmt(m) << ',' << fmt(s);
    }
    o << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// synth-eval

SynthEvalSpec SynthEvalSpec::from_json(const nlohmann::json& j) {
  SynthEvalSpec s;
  try {
    s.n_scenarios = j.value("n_scenarios", s.n_scenarios);
    s.grid_seed = j.value("grid_seed", s.grid_seed);
    s.n = j.value("n", s.n);
    s.oracle_samples = j.value("oracle_samples", s.oracle_samples);
    s.seed = j.value("seed", s.seed);
    if (j.contains("criteria")) {
      s.criteria.clear();
      for (const auto& c : j["criteria"]) s.criteria.push_back(parse_criterion(c.get<std::string>()));
    }
    if (j.contains("estimators")) s.estimators = j["estimators"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth-eval config: ") + e.what());
  }
  if (s.n_scenarios < 1) throw ConfigError("synth-eval: n_scenarios must be >= 1");
  if (s.n < 2) throw ConfigError("synth-eval: n must be >= 2");
  if (s.oracle_samples < kMinOracleSamples) {
    throw ConfigError("synth-eval: oracle_samples must be >= " + std::to_string(kMinOracleSamples));
  }
  if (s.criteria.empty()) throw ConfigError("synth-eval: no criteria");
  for (const auto& e : s.estimators) parse_backend(e);
  return s;
}

std::vector<SynthEvalRow> run_synth_eval(const SynthEvalSpec& spec, int jobs) {
  const auto grid = scenario_grid(spec.n_scenarios, spec.grid_seed);
  const std::size_t per_scenario = spec.criteria.size() * (spec.estimators.size() + 1);
  std::vector<SynthEvalRow> rows(grid.size() * per_scenario);
  parallel_for(grid.size(), jobs, [&](std::size_t sid) {
    const Scenario& sc = grid[sid];
    std::size_t out = sid * per_scenario;
    ScenarioSample smp;
    std::string sample_error;
    try {
      smp = sample_scenario(sc, spec.n, mix_seed(spec.seed, sid, 1));
    } catch (const std::exception& e) {
      sample_error = e.what();
    }
    for (const Criterion crit : spec.criteria) {
      const OracleTarget target = oracle_target(crit);
      SynthEvalRow oracle;
      oracle.scenario_id = static_cast<int>(sid);
      oracle.criterion = crit;
      oracle.estimator_id = "mc-oracle";
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto mc = monte_carlo_mi(sc, target, spec.oracle_samples, mix_seed(spec.seed, sid, 2));
        const auto norm = monte_carlo_normaliser(sc, target, spec.oracle_samples, mix_seed(spec.seed, sid, 3));
        oracle.oracle_mi = mc.value;
        oracle.oracle_stderr = mc.std_error;
        oracle.oracle_normaliser = norm.value;
        oracle.mi = mc.value;
        oracle.nmi = mc.value / norm.value;
      } catch (const std::exception& e) {
        oracle.error = e.what();
        oracle.oracle_mi = oracle.mi = oracle.nmi = std::numeric_limits<double>::quiet_NaN();
      }
      oracle.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      rows[out++] = oracle;

      for (const auto& est : spec.estimators) {
        SynthEvalRow row;
        row.scenario_id = static_cast<int>(sid);
        row.criterion = crit;
        row.oracle_mi = oracle.oracle_mi;
        row.oracle_stderr = oracle.oracle_stderr;
        row.oracle_normaliser = oracle.oracle_normaliser;
        row.estimator_id = est;
        const auto e0 = std::chrono::steady_clock::now();
        try {
          if (!sample_error.empty()) throw DataError(sample_error);
          const MiEstimate m = estimate_nmi(crit, smp.y, smp.s, smp.a, parse_backend(est));
          row.mi = m.mi;
          row.nmi = m.nmi;
        } catch (const std::exception& e) {
          row.error = e.what();
          row.mi = row.nmi = std::numeric_limits<double>::quiet_NaN();
        }
        row.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - e0).count();
        rows[out++] = row;
      }
    }
  });
  return rows;
}

std::string synth_eval_csv(const std::vector<SynthEvalRow>& rows) {
  std::ostringstream o;
  o << header_comment("synth-eval");
  o << "scenario_id,criterion,oracle_mi,oracle_stderr,estimator_id,mi,nmi,wall_time_ms,status\n";
  for (const auto& r : rows) {
    o << r.scenario_id << ',' << to_string(r.criterion) << ',' << fmt(r.oracle_mi) << ','
      << fmt(r.oracle_stderr) << ',' << r.estimator_id << ',' << fmt(r.mi) << ',' << fmt(r.nmi) << ','
      << fmt(r.wall_time_ms) << ',' << csv_escape(r.error.empty() ? "ok" : "error: " + r.error)
      << '\n';
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// bench

BenchSpec BenchSpec::from_json(const nlohmann::json& j) {
  BenchSpec s;
  try {
    if (j.contains("sizes")) s.sizes = j["sizes"].get<std::vector<Eigen::Index>>();
    if (j.contains("methods")) s.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("lambdas")) s.lambdas = j["lambdas"].get<std::vector<double>>();
    s.repeats = j.value("repeats", s.repeats);
    s.max_iter = j.value("max_iter", s.max_iter);
    s.timeout_seconds = j.value("timeout_seconds", s.timeout_seconds);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bench config: ") + e.what());
  }
  if (s.sizes.empty() || s.methods.empty() || s.lambdas.empty()) {
    throw ConfigError("bench: sizes, methods and lambdas must be non-empty");
  }
  std::sort(s.sizes.begin(), s.sizes.end());
  for (const auto& m : s.methods) parse_regulariser(m);
  if (s.repeats < 1 || s.max_iter < 1) throw ConfigError("bench: repeats and max_iter must be >= 1");
  return s;
}

std::vector<BenchRow> run_bench(const Dataset& ds, const BenchSpec& spec) {
  if (ds.n() < spec.sizes.back()) {
    throw ConfigError("bench: dataset has " + std::to_string(ds.n()) + " rows, largest size is " +
                      std::to_string(spec.sizes.back()));
  }
  std::vector<BenchRow> rows;
  for (const auto& method : spec.methods) {
    bool timed_out = false;
    for (const Eigen::Index n : spec.sizes) {
      const Dataset sub = subsample(ds, n, spec.seed);
      for (const double lambda : spec.lambdas) {
        for (int rep = 0; rep < spec.repeats; ++rep) {
          BenchRow row{method, n, lambda, rep, 0.0, 0, 0, ""};
          if (timed_out) {
            row.status = "skipped";
            rows.push_back(row);
            continue;
          }
          TrainingConfig cfg;
          cfg.regulariser = parse_regulariser(method);
          cfg.lambda_f = lambda;
          cfg.optimiser.max_iter = spec.max_iter;
          cfg.optimiser.grad_tol = 0.0;
          const auto t0 = std::chrono::steady_clock::now();
          try {
            const TrainedModel m = train(sub, cfg);
            row.iterations = m.iterations;
            row.evaluations = m.evaluations;
            row.status = to_string(m.status);
          } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
          }
          const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          row.wall_ms = 1e3 * secs;
          if (secs > spec.timeout_seconds) {
            row.status = "timeout";
            timed_out = true;
          }
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

namespace {

bool bench_row_ok(const BenchRow& r) {
  return r.status == "converged" || r.status == "max_iterations" || r.status == "line_search_failed";
}

}  // namespace

std::vector<BenchSummary> summarise_bench(const std::vector<BenchRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::map<Eigen::Index, std::vector<double>>> times, per_eval;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    if (!bench_row_ok(r)) continue;
    times[r.method][r.n].push_back(r.wall_ms);
    if (r.evaluations > 0) per_eval[r.method][r.n].push_back(r.wall_ms / r.evaluations);
  }
  std::vector<BenchSummary> out;
  for (const auto& method : order) {
    BenchSummary s;
    s.method = method;
    for (const auto& [n, ts] : times[method]) s.median_ms.emplace_back(n, median(ts));
    std::vector<double> xs, ys;
    for (const auto& [n, ts] : per_eval[method]) {
      const double med = median(ts);
      s.median_ms_per_eval.emplace_back(n, med);
      if (med > 0.0) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(med);
      }
    }
    s.slope = xs.size() >= 2 ? loglog_slope(xs, ys) : std::numeric_limits<double>::quiet_NaN();
    out.push_back(std::move(s));
  }
  return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream o;
  o << header_comment("bench");
  o << "method,n,lambda_f,repeat,wall_ms,iterations,evaluations,status\n";
  for (const auto& r : rows) {
    o << r.method << ',' << r.n << ',' << fmt(r.lambda_f) << ',' << r.repeat << ',' << fmt(r.wall_ms)
      << ',' << r.iterations << ',' << r.evaluations << ',' << csv_escape(r.status) << '\n';
  }
  return o.str();
}

std::string bench_summary_csv(const std::vector<BenchSummary>& summary) {
  std::ostringstream o;
  o << header_comment("bench-summary");
  o << "method,n,median_ms,median_ms_per_eval,loglog_slope\n";
  for (const auto& s : summary) {
    for (const auto& [n, ms] : s.median_ms) {
      double per_eval = std::numeric_limits<double>::quiet_NaN();
      for (const auto& [m, v] : s.median_ms_per_eval) {
        if (m == n) per_eval = v;
      }
      o << s.method << ',' << n << ',' << fmt(ms) << ',' << fmt(per_eval) << ',' << fmt(s.slope)
        << '\n';
    }
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Output helpers

void write_csv(const std::filesystem::path& path, const std::string& content, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (append && std::filesystem::exists(path)) {
    // Column header is the first non-comment line of both files.
    const auto first_data_line = [](std::istream& in) {
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line[0] != '#') return line;
      }
      return std::string();
    };
    std::ifstream existing(path);
    const std::string old_header = first_data_line(existing);
    std::istringstream fresh(content);
    const std::string new_header = first_data_line(fresh);
    if (old_header != new_header) {
      throw ConfigError("write_csv: cannot append to " + path.string() + " (column header differs)");
    }
    std::ofstream out(path, std::ios::app);
    std::string line;
    while (std::getline(fresh, line)) out << line << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("write_csv: cannot write " + path.string());
  out << content;
}

namespace {

std::filesystem::path resolve_output_dir(const nlohmann::json& config, const RunOptions& opts) {
  std::filesystem::path dir = opts.output_dir;
  if (dir.empty() && config.contains("output_dir")) dir = config["output_dir"].get<std::string>();
  if (dir.empty()) {
    if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') dir = env;
  }
  if (dir.empty()) dir = ".";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void save_resolved_config(const std::filesystem::path& dir, nlohmann::json config,
                          const RunOptions& opts) {
  config["output_dir"] = dir.string();
  config["jobs"] = opts.jobs;
  write_text(dir / "config.resolved.json", config.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

int cmd_sweep(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log) {
  std::filesystem::path dir;
  SweepSpec spec;
  Dataset ds;
  try {
    spec = SweepSpec::from_json(config);
    if (!config.contains("data")) throw ConfigError("sweep: 'data' is required");
    ds = load_data_source(config["data"], base_dir);
    dir = resolve_output_dir(config, opts);
    save_resolved_config(dir, config, opts);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  for (const auto& w : ds.warnings) log << "warning: " << w << '\n';
  log << "sweep: N=" << ds.n() << " P=" << ds.p() << " K=" << ds.k() << ", "
      << spec.lambdas.size() << " lambda_f values x " << spec.folds << " folds, regulariser "
      << regulariser_id(spec.training.regulariser) << ", eval " << estimator_id(spec.eval_backend)
      << '\n';

  const auto rows = run_sweep(ds, spec, opts.jobs);
  write_csv(dir / "frontier.csv", frontier_csv(rows), opts.append);
  const std::string summary = sweep_summary_csv(rows);
  write_csv(dir / "summary.csv", summary, opts.append);
  log << summary;

  if (opts.svg) {
    std::map<int, SvgSeries> by_fold;
    SvgChart ind{"Frontier: held-out R2 vs NMI", "NMI", "R2", false, false, {}};
    SvgSeries s_ind{"independence", {}, {}}, s_sep{"separation", {}, {}};
    std::map<double, std::vector<const SweepRow*>> by_lambda;
    for (const auto& r : rows) by_lambda[r.point.lambda_f].push_back(&r);
    for (const auto& [l, rs] : by_lambda) {
      double r2 = 0, ni = 0, ns = 0;
      for (const auto* r : rs) {
        r2 += r->point.r2;
        ni += r->point.nmi_ind;
        ns += r->point.nmi_sep;
      }
      const double c = static_cast<double>(rs.size());
      s_ind.x.push_back(ni / c);
      s_ind.y.push_back(r2 / c);
      s_sep.x.push_back(ns / c);
      s_sep.y.push_back(r2 / c);
    }
    ind.series = {s_ind, s_sep};
    write_text(dir / "frontier.svg", render_svg(ind));
  }

  int failures = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failures;
      log << "fold failure (lambda_f=" << r.point.lambda_f << ", fold=" << r.point.fold
          << "): " << r.error << '\n';
    }
  }
  return failures == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_synth_eval(const nlohmann::json& config, const RunOptions& opts, std::ostream& log) {
  std::filesystem::path dir;
  SynthEvalSpec spec;
  try {
    spec = SynthEvalSpec::from_json(config);
    dir = resolve_output_dir(config, opts);
    save_resolved_config(dir, config, opts);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  log << "synth-eval: " << spec.n_scenarios << " scenarios, N=" << spec.n << ", oracle samples "
      << spec.oracle_samples << '\n';
  const auto rows = run_synth_eval(spec, opts.jobs);
  write_csv(dir / "synth_eval.csv", synth_eval_csv(rows), opts.append);

  std::map<std::string, std::pair<double, double>> err_time;  // estimator -> (sum |dnmi|, ms)
  std::map<std::string, int> count;
  int failures = 0;
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      ++failures;
      continue;
    }
    if (r.estimator_id == "mc-oracle") continue;
    const double oracle_nmi = r.oracle_mi / r.oracle_normaliser;
    err_time[r.estimator_id].first += std::abs(r.nmi - oracle_nmi);
    err_time[r.estimator_id].second += r.wall_time_ms;
    ++count[r.estimator_id];
  }
  for (const auto& [id, et] : err_time) {
    log << id << ": mean |nmi - oracle| = " << et.first / count[id] << ", total " << et.second
        << " ms\n";
  }
  if (opts.svg) {
    SvgChart chart{"Estimated vs oracle NMI", "oracle NMI", "estimated NMI", false, false, {}};
    std::map<std::string, SvgSeries> series;
    for (const auto& r : rows) {
      if (r.estimator_id == "mc-oracle" || !r.error.empty()) continue;
      auto& s = series[r.estimator_id];
      s.name = r.estimator_id;
      s.x.push_back(r.oracle_mi / r.oracle_normaliser);
      s.y.push_back(r.nmi);
    }
    for (auto& [id, s] : series) {
      // Sort by x so the connecting path is readable.
      std::vector<std::size_t> ord(s.x.size());
      std::iota(ord.begin(), ord.end(), std::size_t{0});
      std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return s.x[a] < s.x[b]; });
      SvgSeries sorted{s.name, {}, {}};
      for (auto i : ord) {
        sorted.x.push_back(s.x[i]);
        sorted.y.push_back(s.y[i]);
      }
      chart.series.push_back(std::move(sorted));
    }
    write_text(dir / "synth_eval.svg", render_svg(chart));
  }
  if (failures > 0) log << failures << " failed rows recorded\n";
  return failures == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_bench(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log) {
  std::filesystem::path dir;
  BenchSpec spec;
  Dataset ds;
  try {
    spec = BenchSpec::from_json(config);
    nlohmann::json source = config.value("data", nlohmann::json::object());
    if (source.empty()) {
      source = {{"synthetic", {{"n", spec.sizes.back()}, {"seed", spec.seed}}}};
    }
    ds = load_data_source(source, base_dir);
    dir = resolve_output_dir(config, opts);
    save_resolved_config(dir, config, opts);
    if (ds.n() < spec.sizes.back()) {
      throw ConfigError("bench: dataset has fewer rows than the largest size");
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  const auto rows = run_bench(ds, spec);
  const auto summary = summarise_bench(rows);
  write_csv(dir / "bench.csv", bench_csv(rows), opts.append);
  write_csv(dir / "bench_summary.csv", bench_summary_csv(summary), opts.append);
  for (const auto& s : summary) log << s.method << ": log-log slope " << s.slope << '\n';
  if (opts.svg) {
    SvgChart chart{"Training cost vs N", "N", "median ms per objective evaluation", true, true, {}};
    for (const auto& s : summary) {
      SvgSeries series{s.method, {}, {}};
      for (const auto& [n, ms] : s.median_ms_per_eval) {
        series.x.push_back(static_cast<double>(n));
        series.y.push_back(ms);
      }
      chart.series.push_back(std::move(series));
    }
    write_text(dir / "bench.svg", render_svg(chart));
  }
  int failures = 0;
  for (const auto& r : rows) failures += bench_row_ok(r) ? 0 : 1;
  if (failures > 0) log << failures << " bench jobs failed, timed out or were skipped\n";
  return failures == 0 ? kExitOk : kExitPartialFailure;
}

int cmd_train(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log) {
  std::filesystem::path dir;
  TrainingConfig cfg;
  Dataset ds;
  try {
    if (!config.contains("data")) throw ConfigError("train: 'data' is required");
    cfg = training_config_from_json(config);
    ds = load_data_source(config["data"], base_dir);
    dir = resolve_output_dir(config, opts);
    if (!config.contains("lambda_w") || config["lambda_w"] == "cv") {
      cfg.lambda_w = select_lambda_w(ds, kDefaultLambdaWGrid, 5, config.value("seed", std::uint64_t{0}));
    }
    save_resolved_config(dir, config, opts);
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  for (const auto& w : ds.warnings) log << "warning: " << w << '\n';
  try {
    const TrainedModel model = train(ds, cfg);
    std::filesystem::path out = config.value("model_out", std::string());
    if (out.empty()) out = dir / "model.json";
    else if (out.is_relative()) out = dir / out;
    save_model(out, model, ds);
    const double r2 = r_squared(ds.target, predict(model, ds.features));
    log << "trained " << regulariser_id(cfg.regulariser) << " lambda_f=" << cfg.lambda_f
        << " lambda_w=" << cfg.lambda_w << " iterations=" << model.iterations
        << " status=" << to_string(model.status) << '\n';
    log << "training R2 = " << r2 << '\n';
    log << "model written to " << out.string() << '\n';
    return model.converged ? kExitOk : kExitPartialFailure;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitPartialFailure;
  }
}

int cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& input_csv,
                const std::filesystem::path& output_csv, std::ostream& log) {
  try {
    const ModelFile model = load_model(model_path);
    const CsvTable table = read_csv_table(input_csv);
    const Eigen::VectorXd scores = predict_csv(model, table);
    std::ostringstream o;
    o << header_comment("predictions");
    o << "row,score\n";
    char buf[40];
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", scores[i]);
      o << i << ',' << buf << '\n';
    }
    write_csv(output_csv, o.str(), false);
    log << "wrote " << scores.size() << " scores to " << output_csv.string() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace fairmi

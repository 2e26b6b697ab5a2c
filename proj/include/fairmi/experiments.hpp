#pragma once

// Reproducible experiment drivers behind the command-line tool: frontier
// sweeps, estimator-quality studies on synthetic scenarios, timing benchmarks,
// and single-model train/predict.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fairmi/data.hpp"
#include "fairmi/fairreg.hpp"
#include "fairmi/infometrics.hpp"
#include "fairmi/oracle.hpp"

namespace fairmi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitPartialFailure = 2;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "FAIRMI_OUTPUT_DIR";

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> v);

/// Builds a dataset from {"csv": path, "schema": {...} | "schema_path": path}
/// or {"synthetic": {"n", "n_features", "base_rate", "proxy_strength",
/// "target_shift", "noise", "seed"}}. Relative paths resolve against base_dir.
Dataset load_data_source(const nlohmann::json& source, const std::filesystem::path& base_dir);

/// Ridge coefficient maximising mean held-out R^2 (lambda_f = 0) over an
/// inner k-fold split; ties go to the smaller coefficient.
double select_lambda_w(const Dataset& ds, const std::vector<double>& grid, int folds,
                       std::uint64_t seed);

inline const std::vector<double> kDefaultLambdaWGrid = {0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};

// ---------------------------------------------------------------------------
// sweep

struct SweepSpec {
  std::vector<double> lambdas;  ///< sorted ascending, non-empty
  int folds = 5;
  std::uint64_t seed = 0;
  std::optional<double> lambda_w;  ///< unset: inner CV per outer fold
  TrainingConfig training;         ///< lambda_f / lambda_w overwritten per job
  EstimatorBackend eval_backend = LrRksBackend{};

  static SweepSpec from_json(const nlohmann::json& j);
};

struct SweepRow {
  FrontierPoint point;
  double lambda_w = 0.0;
  std::string error;  ///< empty on success
};

/// One row per (lambda_f, fold), ordered by lambda_f then fold.
std::vector<SweepRow> run_sweep(const Dataset& ds, const SweepSpec& spec, int jobs);

// ---------------------------------------------------------------------------
// synth-eval

struct SynthEvalSpec {
  int n_scenarios = 100;
  std::uint64_t grid_seed = 0;
  Eigen::Index n = 10000;
  Eigen::Index oracle_samples = 1000000;
  std::vector<Criterion> criteria = {Criterion::Independence};
  std::vector<std::string> estimators = {"lspc-linear", "lspc-quad", "logistic-quad", "lr-rks"};
  std::uint64_t seed = 0;

  static SynthEvalSpec from_json(const nlohmann::json& j);
};

struct SynthEvalRow {
  int scenario_id = 0;
  Criterion criterion = Criterion::Independence;
  double oracle_mi = 0.0;
  double oracle_stderr = 0.0;
  double oracle_normaliser = 0.0;
  std::string estimator_id;  ///< "mc-oracle" for the oracle row
  double mi = 0.0;
  double nmi = 0.0;
  double wall_time_ms = 0.0;
  std::string error;
};

/// Per scenario and criterion: one oracle row followed by one row per estimator.
std::vector<SynthEvalRow> run_synth_eval(const SynthEvalSpec& spec, int jobs);

// ---------------------------------------------------------------------------
// bench

struct BenchSpec {
  std::vector<Eigen::Index> sizes = {500, 1000, 2000, 4000, 8000, 16000};
  std::vector<std::string> methods = {"lspc-ind-linear", "lspc-ind-quad", "lspc-sep-quad",
                                      "berk-group", "berk-individual"};
  std::vector<double> lambdas = {1.0, 10.0};
  int repeats = 1;
  int max_iter = 10;  ///< fixed iteration budget per fit (grad_tol = 0)
  double timeout_seconds = 600.0;
  std::uint64_t seed = 0;

  static BenchSpec from_json(const nlohmann::json& j);
};

struct BenchRow {
  std::string method;
  Eigen::Index n = 0;
  double lambda_f = 0.0;
  int repeat = 0;
  double wall_ms = 0.0;
  int iterations = 0;
  int evaluations = 0;
  std::string status;  ///< lbfgs status, "timeout", "skipped" or an error
};

struct BenchSummary {
  std::string method;
  /// Log-log slope of median time per objective evaluation vs N. Fits with a
  /// fixed iteration budget still differ in line-search evaluations, so the
  /// per-evaluation time is the stable cost measure.
  double slope = 0.0;
  std::vector<std::pair<Eigen::Index, double>> median_ms;           ///< per fit
  std::vector<std::pair<Eigen::Index, double>> median_ms_per_eval;  ///< per evaluation
};

std::vector<BenchRow> run_bench(const Dataset& ds, const BenchSpec& spec);
std::vector<BenchSummary> summarise_bench(const std::vector<BenchRow>& rows);

// ---------------------------------------------------------------------------
// CSV writers (header comment carries schema name and tool version)

std::string frontier_csv(const std::vector<SweepRow>& rows);
std::string sweep_summary_csv(const std::vector<SweepRow>& rows);
std::string synth_eval_csv(const std::vector<SynthEvalRow>& rows);
std::string bench_csv(const std::vector<BenchRow>& rows);
std::string bench_summary_csv(const std::vector<BenchSummary>& summary);

/// Writes `content` to path. With append = true and an existing file whose
/// column header matches, only the data rows are appended.
void write_csv(const std::filesystem::path& path, const std::string& content, bool append);

// ---------------------------------------------------------------------------
// Commands

struct RunOptions {
  std::filesystem::path output_dir;  ///< empty: config, then env var, then "."
  int jobs = 1;
  bool svg = false;
  bool append = false;
};

/// Each command reads its JSON config, writes outputs (and the resolved
/// config) into the output directory, logs to `log`, and returns an exit code.
int cmd_sweep(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log);
int cmd_synth_eval(const nlohmann::json& config, const RunOptions& opts, std::ostream& log);
int cmd_bench(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log);
int cmd_train(const nlohmann::json& config, const std::filesystem::path& base_dir,
              const RunOptions& opts, std::ostream& log);
int cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& input_csv,
                const std::filesystem::path& output_csv, std::ostream& log);

}  // namespace fairmi

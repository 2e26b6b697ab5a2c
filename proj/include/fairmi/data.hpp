#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairmi/lspc.hpp"

namespace fairmi {

/// Per-column affine map x -> (x - mean) / scale.
struct Standardisation {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardisation fit(const Eigen::MatrixXd& x);
  static Standardisation identity(Eigen::Index p);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// The (X, Y, A) triple. `features` are already standardised by
/// `standardisation` (the statistics are kept so raw inputs can be mapped the
/// same way at prediction time).
struct Dataset {
  Eigen::MatrixXd features;  // N x P
  Eigen::VectorXd target;    // N
  ClassVector sensitive;     // N, values in [0, K)
  std::vector<std::string> feature_names;
  std::vector<std::string> class_labels;  // original value of each class index
  Standardisation standardisation;
  std::size_t dropped_rows = 0;
  std::vector<std::string> warnings;

  Eigen::Index n() const { return target.size(); }
  Eigen::Index p() const { return features.cols(); }
  int k() const { return static_cast<int>(class_labels.size()); }
  Eigen::VectorXi class_counts() const;

  /// Throws DataError if any invariant (shared length, K >= 2, every class
  /// present, finite entries) is violated.
  void validate() const;

  /// Row subset in the given order. Class indices are kept as is, so a subset
  /// may lack some classes.
  Dataset rows(const std::vector<Eigen::Index>& idx) const;
};

/// Column roles for CSV ingestion, read from a JSON object
/// {"target": ..., "sensitive": ..., "drop": [...], "include_sensitive": false}.
struct CsvSchema {
  std::string target;
  std::string sensitive;
  std::vector<std::string> drop;
  bool include_sensitive = false;

  static CsvSchema from_json_text(const std::string& text);
  static CsvSchema load(const std::filesystem::path& path);
};

/// Raw string table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or -1.
  int column(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);

/// True for the cell spellings treated as missing: "", "?", "NA", "NaN", "null".
bool is_missing_cell(const std::string& cell);

/// Parses a whole cell as a finite double.
bool parse_double(const std::string& cell, double& out);

/// Loads a dataset. Rows with a missing value in any used column are dropped
/// and counted; sensitive values are re-indexed densely in order of first
/// appearance; zero-variance feature columns are dropped with a warning; the
/// remaining features are standardised to zero mean and unit (population)
/// variance.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

struct FoldAssignment {
  Eigen::VectorXi fold_of;
  int n_folds = 0;
  std::uint64_t seed = 0;

  std::vector<Eigen::Index> test_indices(int fold) const;
  std::vector<Eigen::Index> train_indices(int fold) const;
};

/// Random partition of {0..n-1} into n_folds folds whose sizes differ by at
/// most one.
FoldAssignment kfold(Eigen::Index n, int n_folds, std::uint64_t seed);

/// m rows drawn without replacement, in random order, retaining every class.
Dataset subsample(const Dataset& ds, Eigen::Index m, std::uint64_t seed);

/// Bernoulli A with a 2-D Gaussian over (Y, S) for each class.
struct Scenario {
  double p = 0.5;  ///< P(A = 1)
  Eigen::Vector2d mean0 = Eigen::Vector2d::Zero();
  Eigen::Vector2d mean1 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov0 = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d cov1 = Eigen::Matrix2d::Identity();

  /// Throws DataError unless p is in [0, 1] and both covariances are symmetric
  /// with eigenvalues above 1e-12.
  void validate() const;

  const Eigen::Vector2d& mean(int a) const { return a == 0 ? mean0 : mean1; }
  const Eigen::Matrix2d& cov(int a) const { return a == 0 ? cov0 : cov1; }
  double prior(int a) const { return a == 0 ? 1.0 - p : p; }
};

struct ScenarioSample {
  Eigen::VectorXd y;
  Eigen::VectorXd s;
  ClassVector a;
};

ScenarioSample sample_scenario(const Scenario& sc, Eigen::Index n, std::uint64_t seed);

/// Deterministic family of scenarios. The first is the independence anchor
/// (identical class conditionals); the last separates the class means in S by
/// six pooled standard deviations; those between sweep the S offset upward
/// while drawing base rate, Y offset, per-class correlation and per-class S
/// scale from `seed`.
std::vector<Scenario> scenario_grid(int n_scenarios, std::uint64_t seed);

/// Linear regression data whose features proxy a binary sensitive attribute and
/// whose target carries a group-dependent shift.
struct BiasedRegressionSpec {
  Eigen::Index n_features = 5;
  double base_rate = 0.5;       ///< P(A = 1)
  double proxy_strength = 1.0;  ///< class-mean offset of the proxy features
  double target_shift = 1.0;    ///< group shift added to Y
  double noise = 0.5;
};

Dataset make_biased_regression(Eigen::Index n, const BiasedRegressionSpec& spec,
                               std::uint64_t seed);

}  // namespace fairmi

#include "fairmi/data.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "fairmi/errors.hpp"

namespace fairmi {

// ---------------------------------------------------------------------------
// Standardisation

Standardisation Standardisation::fit(const Eigen::MatrixXd& x) {
  Standardisation st;
  const double n = static_cast<double>(x.rows());
  st.mean = x.colwise().mean().transpose();
  st.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - st.mean[j]).square().sum() / n;
    st.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return st;
}

Standardisation Standardisation::identity(Eigen::Index p) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p)};
}

Eigen::MatrixXd Standardisation::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw DimensionError("Standardisation::apply: column mismatch");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out.col(j) = (x.col(j).array() - mean[j]) / scale[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset

Eigen::VectorXi Dataset::class_counts() const {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(k());
  for (Eigen::Index i = 0; i < sensitive.size(); ++i) {
    if (sensitive[i] >= 0 && sensitive[i] < k()) ++counts[sensitive[i]];
  }
  return counts;
}

void Dataset::validate() const {
  const Eigen::Index rows = target.size();
  if (features.rows() != rows || sensitive.size() != rows) {
    throw DataError("Dataset: features, target and sensitive lengths differ");
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw DataError("Dataset: feature_names size differs from feature count");
  }
  if (k() < 2) throw DataError("Dataset: need at least two sensitive classes");
  if (!features.allFinite() || !target.allFinite()) throw DataError("Dataset: non-finite entries");
  check_classes(sensitive, rows, k(), "Dataset");
  const Eigen::VectorXi counts = class_counts();
  for (int c = 0; c < k(); ++c) {
    if (counts[c] == 0) throw DataError("Dataset: class '" + class_labels[c] + "' has no rows");
  }
}

Dataset Dataset::rows(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
  out.target.resize(static_cast<Eigen::Index>(idx.size()));
  out.sensitive.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out.features.row(i) = features.row(idx[r]);
    out.target[i] = target[idx[r]];
    out.sensitive[i] = sensitive[idx[r]];
  }
  out.feature_names = feature_names;
  out.class_labels = class_labels;
  out.standardisation = standardisation;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

CsvSchema CsvSchema::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("target") || !j.contains("sensitive")) {
    throw ConfigError("schema: 'target' and 'sensitive' are required");
  }
  CsvSchema s;
  s.target = j.at("target").get<std::string>();
  s.sensitive = j.at("sensitive").get<std::string>();
  if (j.contains("drop")) s.drop = j.at("drop").get<std::vector<std::string>>();
  s.include_sensitive = j.value("include_sensitive", false);
  return s;
}

CsvSchema CsvSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("schema: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// RFC-4180-style split of one record; quotes may wrap fields, "" escapes a quote.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_record(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw DataError("csv: line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError("csv: missing header row in " + path.string());
  return table;
}

bool is_missing_cell(const std::string& cell) {
  if (cell.empty() || cell == "?") return true;
  std::string lower(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null";
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (!std::filesystem::exists(path)) throw DataError("load_csv: no such file " + path.string());
  const CsvTable table = read_csv_table(path);
  const int target_col = table.column(schema.target);
  const int sens_col = table.column(schema.sensitive);
  if (target_col < 0) throw DataError("load_csv: target column '" + schema.target + "' not found");
  if (sens_col < 0) {
    throw DataError("load_csv: sensitive column '" + schema.sensitive + "' not found");
  }
  for (const auto& d : schema.drop) {
    if (table.column(d) < 0) throw DataError("load_csv: drop column '" + d + "' not found");
  }

  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
    if (c == target_col || c == sens_col) continue;
    if (std::find(schema.drop.begin(), schema.drop.end(), table.header[c]) != schema.drop.end()) {
      continue;
    }
    feature_cols.push_back(c);
  }

  Dataset ds;
  std::vector<std::vector<double>> raw;
  std::vector<double> target;
  std::vector<int> sensitive;
  std::map<std::string, int> class_index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool missing = is_missing_cell(row[target_col]) || is_missing_cell(row[sens_col]);
    for (int c : feature_cols) missing = missing || is_missing_cell(row[c]);
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    std::vector<double> values(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      if (!parse_double(row[feature_cols[j]], values[j])) {
        throw DataError("load_csv: non-numeric value '" + row[feature_cols[j]] + "' in column '" +
                        table.header[feature_cols[j]] + "' (data row " + std::to_string(r + 1) +
                        ")");
      }
    }
    double y = 0.0;
    if (!parse_double(row[target_col], y)) {
      throw DataError("load_csv: non-numeric target '" + row[target_col] + "' (data row " +
                      std::to_string(r + 1) + ")");
    }
    const auto [it, inserted] =
        class_index.try_emplace(row[sens_col], static_cast<int>(class_index.size()));
    if (inserted) ds.class_labels.push_back(row[sens_col]);
    raw.push_back(std::move(values));
    target.push_back(y);
    sensitive.push_back(it->second);
  }
  if (raw.empty()) throw DataError("load_csv: no complete rows in " + path.string());
  if (ds.class_labels.size() < 2) {
    throw DataError("load_csv: fewer than 2 sensitive classes after filtering");
  }
  if (ds.dropped_rows > 0) {
    ds.warnings.push_back("dropped " + std::to_string(ds.dropped_rows) +
                          " rows with missing values");
  }

  const auto n = static_cast<Eigen::Index>(raw.size());
  const int k = ds.k();
  std::vector<std::string> names;
  for (int c : feature_cols) names.push_back(table.header[c]);
  const auto p_raw = static_cast<Eigen::Index>(feature_cols.size());
  const Eigen::Index p_sens = schema.include_sensitive ? k - 1 : 0;
  Eigen::MatrixXd x(n, p_raw + p_sens);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p_raw; ++j) x(i, j) = raw[i][j];
    for (Eigen::Index c = 1; c <= p_sens; ++c) x(i, p_raw + c - 1) = sensitive[i] == c ? 1.0 : 0.0;
  }
  for (Eigen::Index c = 1; c <= p_sens; ++c) {
    names.push_back(schema.sensitive + "=" + ds.class_labels[c]);
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double lo = x.col(j).minCoeff();
    const double hi = x.col(j).maxCoeff();
    if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
      ds.warnings.push_back("dropped constant feature column '" + names[j] + "'");
    } else {
      keep.push_back(j);
    }
  }
  Eigen::MatrixXd kept(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    kept.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);
    ds.feature_names.push_back(names[keep[j]]);
  }
  ds.standardisation = Standardisation::fit(kept);
  ds.features = ds.standardisation.apply(kept);
  ds.target = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
  ds.sensitive = Eigen::Map<const Eigen::VectorXi>(sensitive.data(), n);
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Folds and subsets

std::vector<Eigen::Index> FoldAssignment::test_indices(int fold) const {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] == fold) idx.push_back(i);
  }
  return idx;
}

std::vector<Eigen::Index> FoldAssignment::train_indices(int fold) const {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < fold_of.size(); ++i) {
    if (fold_of[i] != fold) idx.push_back(i);
  }
  return idx;
}

namespace {

std::vector<Eigen::Index> shuffled_range(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace

FoldAssignment kfold(Eigen::Index n, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ConfigError("kfold: need at least 2 folds");
  if (n_folds > n) {
    throw ConfigError("kfold: " + std::to_string(n_folds) + " folds for " + std::to_string(n) +
                      " rows");
  }
  FoldAssignment folds;
  folds.n_folds = n_folds;
  folds.seed = seed;
  folds.fold_of.resize(n);
  const auto perm = shuffled_range(n, seed);
  for (std::size_t r = 0; r < perm.size(); ++r) {
    folds.fold_of[perm[r]] = static_cast<int>(r % static_cast<std::size_t>(n_folds));
  }
  return folds;
}

Dataset subsample(const Dataset& ds, Eigen::Index m, std::uint64_t seed) {
  if (m > ds.n()) {
    throw ConfigError("subsample: m=" + std::to_string(m) + " exceeds N=" + std::to_string(ds.n()));
  }
  const Eigen::VectorXi counts = ds.class_counts();
  if ((counts.array() == 0).any()) throw DataError("subsample: a class has no rows");
  if (m < ds.k()) {
    throw DataError("subsample: m=" + std::to_string(m) + " cannot retain all " +
                    std::to_string(ds.k()) + " classes");
  }
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    auto perm = shuffled_range(ds.n(), seed + static_cast<std::uint64_t>(attempt));
    perm.resize(static_cast<std::size_t>(m));
    Dataset out = ds.rows(perm);
    if ((out.class_counts().array() > 0).all()) return out;
  }
  throw DataError("subsample: could not retain every class in " + std::to_string(kMaxAttempts) +
                  " attempts");
}

// ---------------------------------------------------------------------------
// Scenarios

void Scenario::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("Scenario: p must lie in [0, 1]");
  for (const Eigen::Matrix2d* c : {&cov0, &cov1}) {
    if (!c->allFinite() || std::abs((*c)(0, 1) - (*c)(1, 0)) > 1e-12 * c->cwiseAbs().maxCoeff()) {
      throw DataError("Scenario: covariance is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(*c, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 1e-12)) {
      throw DataError("Scenario: covariance is not positive definite");
    }
  }
  if (!mean0.allFinite() || !mean1.allFinite()) throw DataError("Scenario: non-finite mean");
}

ScenarioSample sample_scenario(const Scenario& sc, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("sample_scenario: n must be >= 1");
  sc.validate();
  const Eigen::Matrix2d l0 = sc.cov0.llt().matrixL();
  const Eigen::Matrix2d l1 = sc.cov1.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ScenarioSample out;
  out.y.resize(n);
  out.s.resize(n);
  out.a.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = unif(rng) < sc.p ? 1 : 0;
    Eigen::Vector2d z;
    z[0] = normal(rng);
    z[1] = normal(rng);
    const Eigen::Vector2d v = sc.mean(a) + (a == 0 ? l0 : l1) * z;
    out.a[i] = a;
    out.y[i] = v[0];
    out.s[i] = v[1];
  }
  return out;
}

namespace {

Eigen::Matrix2d make_cov(double sd_y, double sd_s, double rho) {
  Eigen::Matrix2d c;
  c << sd_y * sd_y, rho * sd_y * sd_s, rho * sd_y * sd_s, sd_s * sd_s;
  return c;
}

}  // namespace

std::vector<Scenario> scenario_grid(int n_scenarios, std::uint64_t seed) {
  if (n_scenarios < 1) throw ConfigError("scenario_grid: need at least one scenario");
  std::vector<Scenario> grid;
  grid.reserve(static_cast<std::size_t>(n_scenarios));

  Scenario anchor;
  anchor.p = 0.5;
  anchor.cov0 = anchor.cov1 = make_cov(1.0, 1.0, 0.6);
  grid.push_back(anchor);
  if (n_scenarios == 1) return grid;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unif(rng); };
  for (int i = 1; i + 1 < n_scenarios; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_scenarios - 1);
    Scenario sc;
    sc.p = draw(0.2, 0.8);
    const double offset_s = 5.0 * t;
    const double offset_y = draw(-1.5, 1.5);
    const double sd_s1 = std::exp(draw(std::log(0.6), std::log(1.6)));
    const double rho0 = draw(0.1, 0.9);
    const double rho1 = draw(0.1, 0.9);
    sc.mean0 = Eigen::Vector2d(0.0, -0.5 * offset_s);
    sc.mean1 = Eigen::Vector2d(offset_y, 0.5 * offset_s);
    sc.cov0 = make_cov(1.0, 1.0, rho0);
    sc.cov1 = make_cov(1.0, sd_s1, rho1);
    grid.push_back(sc);
  }

  Scenario separated;
  separated.p = 0.5;
  separated.mean0 = Eigen::Vector2d(0.0, -3.0);
  separated.mean1 = Eigen::Vector2d(0.5, 3.0);
  separated.cov0 = separated.cov1 = make_cov(1.0, 1.0, 0.5);
  grid.push_back(separated);
  return grid;
}

Dataset make_biased_regression(Eigen::Index n, const BiasedRegressionSpec& spec,
                               std::uint64_t seed) {
  if (n < 2 || spec.n_features < 1) throw ConfigError("make_biased_regression: bad size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index p = spec.n_features;

  // The first two features are proxies of A; coefficients are fixed so the
  // task is the same for every seed.
  Eigen::VectorXd proxy = Eigen::VectorXd::Zero(p);
  proxy[0] = 1.0;
  if (p > 1) proxy[1] = 0.5;
  Eigen::VectorXd coef(p);
  for (Eigen::Index j = 0; j < p; ++j) coef[j] = (j % 2 == 0 ? 1.0 : -0.6) / (1.0 + 0.5 * j);

  Dataset ds;
  Eigen::MatrixXd x(n, p);
  ds.target.resize(n);
  ds.sensitive.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = unif(rng) < spec.base_rate ? 1 : 0;
    const double centred = a == 1 ? 1.0 : -1.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      x(i, j) = normal(rng) + spec.proxy_strength * proxy[j] * centred;
    }
    ds.sensitive[i] = a;
    ds.target[i] = x.row(i).dot(coef) + spec.target_shift * centred + spec.noise * normal(rng);
  }
  for (Eigen::Index j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.class_labels = {"0", "1"};
  ds.standardisation = Standardisation::fit(x);
  ds.features = ds.standardisation.apply(x);
  ds.validate();
  return ds;
}

}  // namespace fairmi

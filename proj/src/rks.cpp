#include "fairmi/rks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace fairmi {

double median_pairwise_distance(const Eigen::MatrixXd& u, std::uint64_t seed,
                                Eigen::Index max_rows) {
  const Eigen::Index n = u.rows();
  if (n < 2) return 1.0;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (n > max_rows) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
    }
    idx.resize(static_cast<std::size_t>(max_rows));
  }
  std::vector<double> d;
  d.reserve(idx.size() * (idx.size() - 1) / 2);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      d.push_back((u.row(idx[i]) - u.row(idx[j])).norm());
    }
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

FourierFeatureMap FourierFeatureMap::draw(Eigen::Index input_dim, int n_features,
                                          double bandwidth, std::uint64_t seed) {
  if (n_features < 1) throw ConfigError("rks: n_features must be >= 1");
  if (!(bandwidth > 0.0)) throw ConfigError("rks: bandwidth must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / bandwidth);
  std::uniform_real_distribution<double> unif(0.0, 2.0 * std::numbers::pi);
  FourierFeatureMap map;
  map.omega.resize(input_dim, n_features);
  map.offset.resize(n_features);
  for (int m = 0; m < n_features; ++m) {
    for (Eigen::Index r = 0; r < input_dim; ++r) map.omega(r, m) = normal(rng);
    map.offset[m] = unif(rng);
  }
  return map;
}

Eigen::MatrixXd FourierFeatureMap::transform(const Eigen::MatrixXd& u) const {
  if (u.cols() != omega.rows()) throw DimensionError("rks: input dimension mismatch");
  const Eigen::Index m = omega.cols();
  Eigen::MatrixXd phi(u.rows(), m + 1);
  phi.col(0).setOnes();
  const Eigen::MatrixXd proj = (u * omega).rowwise() + offset.transpose();
  phi.rightCols(m) = std::sqrt(2.0 / static_cast<double>(m)) * proj.array().cos().matrix();
  return phi;
}

Eigen::MatrixXd RksClassifier::operator()(const Eigen::MatrixXd& z) const {
  return model_.predict_proba(map_.transform(z.rightCols(z.cols() - 1)));
}

RksClassifier lr_rks_backend_fit(const Eigen::MatrixXd& z, const ClassVector& a, int k,
                                 FourierFeatureMap map, double lambda_c) {
  LogisticParams lp;
  lp.lambda_c = lambda_c;
  const Eigen::MatrixXd phi = map.transform(z.rightCols(z.cols() - 1));
  LogisticModel model = fit_logistic(phi, a, k, lp);
  return RksClassifier(std::move(map), std::move(model));
}

RksClassifier lr_rks_backend_fit(const Eigen::MatrixXd& z, const ClassVector& a, int k,
                                 const RksParams& params) {
  if (z.cols() < 2) throw DimensionError("rks: z needs a constant column and at least one input");
  const Eigen::MatrixXd u = z.rightCols(z.cols() - 1);
  const double bw =
      params.bandwidth > 0.0 ? params.bandwidth : median_pairwise_distance(u, params.seed);
  auto clf = lr_rks_backend_fit(
      z, a, k, FourierFeatureMap::draw(u.cols(), params.n_features, bw, params.seed),
      params.lambda_c);
  clf.bandwidth_used = bw;
  return clf;
}

}  // namespace fairmi

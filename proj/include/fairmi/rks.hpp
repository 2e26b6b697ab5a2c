#pragma once

// Logistic regression on random Fourier ("kitchen sink") features.

#include <Eigen/Core>

#include <cstdint>

#include "fairmi/logistic.hpp"

namespace fairmi {

struct RksParams {
  int n_features = 100;
  double bandwidth = 0.0;  ///< <= 0 selects the median heuristic
  double lambda_c = 1e-3;
  std::uint64_t seed = 0;
};

/// Median Euclidean distance between distinct rows of the first `max_rows`
/// rows of a seeded permutation of U.
double median_pairwise_distance(const Eigen::MatrixXd& u, std::uint64_t seed,
                                Eigen::Index max_rows = 1000);

/// phi(u) = [1, sqrt(2/M) cos(omega_m^T u + b_m)]_{m=1..M}.
struct FourierFeatureMap {
  Eigen::MatrixXd omega;   // input_dim x M
  Eigen::VectorXd offset;  // M

  static FourierFeatureMap draw(Eigen::Index input_dim, int n_features, double bandwidth,
                                std::uint64_t seed);
  Eigen::MatrixXd transform(const Eigen::MatrixXd& u) const;
};

/// Posterior function returned by the LR-RKS backend. Inputs are classifier
/// z-vectors whose leading constant column is ignored.
class RksClassifier {
 public:
  RksClassifier(FourierFeatureMap map, LogisticModel model)
      : map_(std::move(map)), model_(std::move(model)) {}

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& z) const;
  const FourierFeatureMap& feature_map() const { return map_; }
  double bandwidth_used = 0.0;

 private:
  FourierFeatureMap map_;
  LogisticModel model_;
};

RksClassifier lr_rks_backend_fit(const Eigen::MatrixXd& z, const ClassVector& a, int k,
                                 const RksParams& params);

/// Same as above with an explicit feature map (used to pin the random draw).
RksClassifier lr_rks_backend_fit(const Eigen::MatrixXd& z, const ClassVector& a, int k,
                                 FourierFeatureMap map, double lambda_c);

}  // namespace fairmi

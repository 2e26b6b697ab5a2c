#pragma once

// Fairness-regularised linear regression:
//
//   L(theta) = (1/N) ||Y - S||^2 + lambda_w ||theta_w||^2 + lambda_f * penalty(Y, S, A),
//   S = X theta_w + theta_0,
//
// where the penalty is an entropic regulariser built from a classifier of A
// that is refitted on the current scores at every evaluation, or one of the
// pairwise convex baselines.

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fairmi/data.hpp"
#include "fairmi/infometrics.hpp"
#include "fairmi/lbfgs.hpp"
#include "fairmi/logistic.hpp"
#include "fairmi/lspc.hpp"

namespace fairmi {

/// Mean log-posterior penalty using LSPC refitted in closed form.
///   independence: l_ind = (1/N) sum log p(a_i | [1, s_i])
///   separation:   l_sep = (1/N) sum log p(a_i | [1, s_i, y_i])
///   sufficiency:  l_suf = l_sep - l_ind
/// Both l_ind and l_sep are <= 0; adding them with a positive weight pushes
/// the classifier's likelihood down, i.e. makes A less predictable.
struct LspcEntropic {
  Criterion criterion = Criterion::Independence;
  BasisKind basis = BasisKind::FeatureCross;
  LspcParams params;
};

/// Same penalty with a nested logistic classifier on feature-cross features,
/// refitted by Newton's method at every evaluation.
struct LogisticEntropic {
  Criterion criterion = Criterion::Independence;
  LogisticParams params;
  bool warm_start = false;  ///< start each inner fit from the previous evaluation's weights
};

/// Pairwise baselines over cross-group pairs (i in A=0, j in A=1) with target
/// similarity d(y, y') = exp(-(y - y')^2 / (2 h^2)).
///   group:      [(1/(n0 n1)) sum d_ij (s_i - s_j)]^2
///   individual: (1/(n0 n1)) sum d_ij (s_i - s_j)^2
/// A bandwidth <= 0 means h = stdev(Y) of the batch.
struct BerkGroup {
  double bandwidth = 0.0;
};
struct BerkIndividual {
  double bandwidth = 0.0;
};

struct NoRegulariser {};

using Regulariser = std::variant<NoRegulariser, LspcEntropic, LogisticEntropic, BerkGroup, BerkIndividual>;

/// e.g. "lspc-ind-quad", "lspc-sep-linear", "lr-sep-quad", "berk-group",
/// "berk-individual", "none".
std::string regulariser_id(const Regulariser& r);
Regulariser parse_regulariser(const std::string& id);

/// Id of the classifier family the regulariser uses internally (matches
/// estimator_id), or empty for the non-entropic regularisers.
std::string regulariser_backend_id(const Regulariser& r);

enum class BerkKind { Group, Individual };

struct PenaltyValue {
  double value = 0.0;
  Eigen::VectorXd grad_s;  ///< d value / d S, empty unless requested
};

double berk_penalty(BerkKind kind, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                    const ClassVector& a, double bandwidth);
PenaltyValue berk_penalty_with_gradient(BerkKind kind, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& s, const ClassVector& a,
                                        double bandwidth, bool with_gradient);

/// l_ind and l_sep evaluated with the same classifier settings on one batch.
struct EntropicTerms {
  double l_ind = 0.0;
  double l_sep = 0.0;
};
EntropicTerms lspc_entropic_terms(const LspcEntropic& reg, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& s, const ClassVector& a, int k);

/// Warm-start state carried between penalty evaluations (nested logistic only).
struct PenaltyCache {
  std::optional<Eigen::MatrixXd> ind_weights;
  std::optional<Eigen::MatrixXd> sep_weights;
};

PenaltyValue fairness_penalty(const Regulariser& reg, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& s, const ClassVector& a, int k,
                              bool with_gradient = false, PenaltyCache* cache = nullptr);

enum class InitKind { Ridge, Zero, Random };

struct OptimiserSettings {
  int max_iter = 500;
  double grad_tol = 1e-6;
  int history_size = 10;
};

struct TrainingConfig {
  double lambda_w = 0.0;
  double lambda_f = 0.0;
  Regulariser regulariser = NoRegulariser{};
  OptimiserSettings optimiser;
  InitKind init = InitKind::Ridge;
  std::uint64_t init_seed = 0;
  int n_starts = 1;

  void validate() const;
};

struct TrainedModel {
  Eigen::VectorXd theta;  ///< [weights (P), intercept]
  TrainingConfig config;
  std::vector<double> train_loss_trace;
  bool converged = false;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  int iterations = 0;
  int evaluations = 0;
};

/// S = X theta_w + theta_0.
Eigen::VectorXd predict_scores(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x);
Eigen::VectorXd predict(const TrainedModel& model, const Eigen::MatrixXd& x);

/// Closed-form minimiser of (1/N)||Y - X w - b||^2 + lambda_w ||w||^2.
Eigen::VectorXd ridge_solution(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda_w);

/// Stateful objective used by `train`; holds the warm-start cache of nested
/// classifiers. Not thread-safe.
class FairObjective {
 public:
  FairObjective(const Dataset& ds, const TrainingConfig& config);

  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad);
  double value(const Eigen::VectorXd& theta);

  /// Individual terms at theta (fit, ridge, penalty).
  struct Terms {
    double fit = 0.0;
    double ridge = 0.0;
    double penalty = 0.0;
  };
  Terms terms(const Eigen::VectorXd& theta);

 private:
  double evaluate(const Eigen::VectorXd& theta, Eigen::VectorXd* grad);

  const Dataset& ds_;
  TrainingConfig config_;
  PenaltyCache cache_;
};

double total_loss(const Eigen::VectorXd& theta, const Dataset& ds, const TrainingConfig& config);
Eigen::VectorXd loss_gradient(const Eigen::VectorXd& theta, const Dataset& ds,
                              const TrainingConfig& config);

/// L-BFGS from the configured initial point (and n_starts - 1 seeded
/// perturbations of it); returns the best start. Line-search failure is
/// reported through `converged = false`, not an exception.
TrainedModel train(const Dataset& ds, const TrainingConfig& config);

/// 1 - SS_res / SS_tot around the mean of y.
double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

struct FrontierPoint {
  double lambda_f = 0.0;
  int fold = 0;
  double r2 = 0.0;
  double nmi_ind = 0.0;
  double nmi_sep = 0.0;
  double nmi_suf = 0.0;
  double train_seconds = 0.0;
  std::string estimator_id;    ///< eval backend that produced the nmi values
  std::string regulariser_id;  ///< training regulariser
  bool converged = false;
};

/// Trains on every fold except `fold_id` (features re-standardised with
/// training-fold statistics) and scores the held-out fold: R^2 plus all three
/// NMI values from `eval_backend`, fitted on the held-out rows. The eval
/// backend must differ from the regulariser's own classifier family.
FrontierPoint evaluate_fold(const Dataset& ds, const FoldAssignment& folds, int fold_id,
                            const TrainingConfig& config, const EstimatorBackend& eval_backend);

}  // namespace fairmi

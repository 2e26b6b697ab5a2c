#pragma once

// Plug-in entropy and normalised (conditional) mutual information between a
// categorical sensitive attribute A and continuous scores/targets, estimated
// through probabilistic classifiers of A.

#include <Eigen/Core>

#include <array>
#include <string>
#include <variant>

#include "fairmi/lspc.hpp"
#include "fairmi/rks.hpp"

namespace fairmi {

/// Independence: S _|_ A.  Separation: S _|_ A | Y.  Sufficiency: Y _|_ A | S.
enum class Criterion { Independence, Separation, Sufficiency };

inline constexpr std::array<Criterion, 3> kAllCriteria = {
    Criterion::Independence, Criterion::Separation, Criterion::Sufficiency};

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& name);

struct LspcBackend {
  BasisKind basis = BasisKind::FeatureCross;
  LspcParams params;
};

struct LogisticQuadBackend {
  double lambda_c = 1e-3;
};

struct LrRksBackend {
  RksParams params;
};

using EstimatorBackend = std::variant<LspcBackend, LogisticQuadBackend, LrRksBackend>;

/// "lspc-linear", "lspc-quad", "logistic-quad" or "lr-rks".
std::string estimator_id(const EstimatorBackend& backend);
EstimatorBackend parse_backend(const std::string& id);

struct MiEstimate {
  double mi = 0.0;          ///< nats, may be slightly negative
  double normaliser = 1.0;  ///< nats, > 0
  double nmi = 0.0;         ///< mi / normaliser
  std::string estimator_id;
};

/// Probability floor applied to every backend's posteriors before logs.
inline constexpr double kEstimatorProbFloor = 1e-6;

/// Normalisers at or below this many nats raise NormaliserDegenerate.
inline constexpr double kDegenerateNormaliser = 1e-6;

/// -sum_a (N_a / N) log(N_a / N), in nats.
double entropy(const ClassVector& a);

/// Fits the backend on (conditioners, A) and returns in-sample posteriors
/// (N x K), each row floored at kEstimatorProbFloor and renormalised.
/// `conditioners` holds the raw conditioning columns (no constant column);
/// they are standardised internally. K is max(A) + 1; absent classes receive
/// the floor.
Eigen::MatrixXd fit_posteriors(const EstimatorBackend& backend, const Eigen::MatrixXd& conditioners,
                               const ClassVector& a);

/// Plug-in -(1/N) sum_i log p(a_i | z_i) with the classifier fitted on the
/// same rows. Not guaranteed non-negative.
double cond_entropy(const ClassVector& a, const Eigen::MatrixXd& conditioners,
                    const EstimatorBackend& backend);

MiEstimate estimate_nmi(Criterion criterion, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                        const ClassVector& a, const EstimatorBackend& backend);

/// Per-row log posteriors of the observed class under each conditioning set,
/// plus the empirical log prior. All three criteria are functions of these.
struct SharedLogPosteriors {
  Eigen::VectorXd log_prior;  // log(N_{a_i} / N)
  Eigen::VectorXd given_s;    // log p(a_i | s_i)
  Eigen::VectorXd given_y;    // log p(a_i | y_i)
  Eigen::VectorXd given_ys;   // log p(a_i | y_i, s_i)
};

SharedLogPosteriors shared_log_posteriors(const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                                          const ClassVector& a, const EstimatorBackend& backend);

/// Builds the estimate for one criterion from shared posteriors.
MiEstimate nmi_from_shared(Criterion criterion, const SharedLogPosteriors& shared,
                           const std::string& id);

/// All three criteria from a single set of three classifier fits, in
/// kAllCriteria order. A degenerate normaliser yields NaN for that entry.
std::array<MiEstimate, 3> estimate_all_nmi(const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                                           const ClassVector& a, const EstimatorBackend& backend);

}  // namespace fairmi

#include "fairmi/infometrics.hpp"

#include <cmath>
#include <limits>

#include "fairmi/errors.hpp"
#include "fairmi/logistic.hpp"

namespace fairmi {

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::Independence: return "independence";
    case Criterion::Separation: return "separation";
    case Criterion::Sufficiency: return "sufficiency";
  }
  return "unknown";
}

Criterion parse_criterion(const std::string& name) {
  if (name == "independence" || name == "ind") return Criterion::Independence;
  if (name == "separation" || name == "sep") return Criterion::Separation;
  if (name == "sufficiency" || name == "suf") return Criterion::Sufficiency;
  throw ConfigError("unknown criterion '" + name + "'");
}

std::string estimator_id(const EstimatorBackend& backend) {
  struct Visitor {
    std::string operator()(const LspcBackend& b) const { return "lspc-" + to_string(b.basis); }
    std::string operator()(const LogisticQuadBackend&) const { return "logistic-quad"; }
    std::string operator()(const LrRksBackend&) const { return "lr-rks"; }
  };
  return std::visit(Visitor{}, backend);
}

EstimatorBackend parse_backend(const std::string& id) {
  if (id == "lspc-linear") return LspcBackend{BasisKind::Identity, {}};
  if (id == "lspc-quad") return LspcBackend{BasisKind::FeatureCross, {}};
  if (id == "logistic-quad") return LogisticQuadBackend{};
  if (id == "lr-rks") return LrRksBackend{};
  throw ConfigError("unknown estimator '" + id + "'");
}

double entropy(const ClassVector& a) {
  if (a.size() == 0) throw DataError("entropy: empty class vector");
  if (a.minCoeff() < 0) throw DataError("entropy: negative class label");
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(a.maxCoeff() + 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) counts[a[i]] += 1.0;
  const double n = static_cast<double>(a.size());
  double h = 0.0;
  for (Eigen::Index c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0.0) h -= counts[c] / n * std::log(counts[c] / n);
  }
  return h;
}

namespace {

// [1, standardised conditioners]; constant columns become zeros.
Eigen::MatrixXd make_z(const Eigen::MatrixXd& conditioners) {
  const Eigen::Index n = conditioners.rows();
  Eigen::MatrixXd z(n, conditioners.cols() + 1);
  z.col(0).setOnes();
  for (Eigen::Index j = 0; j < conditioners.cols(); ++j) {
    const double mean = conditioners.col(j).mean();
    const double sd =
        std::sqrt((conditioners.col(j).array() - mean).square().sum() / static_cast<double>(n));
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      z.col(j + 1) = (conditioners.col(j).array() - mean) / sd;
    } else {
      z.col(j + 1).setZero();
    }
  }
  return z;
}

Eigen::MatrixXd floor_rows(Eigen::MatrixXd p) {
  const double k = static_cast<double>(p.cols());
  p = (p.array() + kEstimatorProbFloor) / (1.0 + k * kEstimatorProbFloor);
  return p;
}

Eigen::MatrixXd posteriors_present(const EstimatorBackend& backend, const Eigen::MatrixXd& z,
                                   const ClassVector& a, int k) {
  struct Visitor {
    const Eigen::MatrixXd& z;
    const ClassVector& a;
    int k;
    Eigen::MatrixXd operator()(const LspcBackend& b) const {
      const BasisSpec basis{b.basis, z.cols()};
      LspcParams params = b.params;
      params.prob_floor = kEstimatorProbFloor;
      return posteriors(fit_lspc_model(basis, z, a, k, params), z);
    }
    Eigen::MatrixXd operator()(const LogisticQuadBackend& b) const {
      const Eigen::MatrixXd phi = expand(BasisSpec::feature_cross(z.cols()), z);
      LogisticParams params;
      params.lambda_c = b.lambda_c;
      return floor_rows(fit_logistic(phi, a, k, params).predict_proba(phi));
    }
    Eigen::MatrixXd operator()(const LrRksBackend& b) const {
      return floor_rows(lr_rks_backend_fit(z, a, k, b.params)(z));
    }
  };
  return std::visit(Visitor{z, a, k}, backend);
}

Eigen::VectorXd observed_log(const Eigen::MatrixXd& p, const ClassVector& a) {
  Eigen::VectorXd out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = std::log(p(i, a[i]));
  return out;
}

void check_lengths(const Eigen::VectorXd& y, const Eigen::VectorXd& s, const ClassVector& a) {
  if (s.size() != a.size() || y.size() != a.size()) {
    throw DimensionError("estimate_nmi: Y, S and A lengths differ");
  }
  if (a.size() == 0) throw DataError("estimate_nmi: empty input");
}

}  // namespace

Eigen::MatrixXd fit_posteriors(const EstimatorBackend& backend, const Eigen::MatrixXd& conditioners,
                               const ClassVector& a) {
  if (conditioners.rows() != a.size()) throw DimensionError("fit_posteriors: row mismatch");
  if (a.size() == 0) throw DataError("fit_posteriors: empty input");
  if (a.minCoeff() < 0) throw DataError("fit_posteriors: negative class label");
  const int k = a.maxCoeff() + 1;

  // Compress to the classes that occur so every backend sees a full label set.
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (Eigen::Index i = 0; i < a.size(); ++i) seen[a[i]] = true;
  std::vector<int> to_dense(static_cast<std::size_t>(k), -1);
  std::vector<int> to_orig;
  for (int c = 0; c < k; ++c) {
    if (seen[c]) {
      to_dense[c] = static_cast<int>(to_orig.size());
      to_orig.push_back(c);
    }
  }
  const Eigen::MatrixXd z = make_z(conditioners);
  const int present = static_cast<int>(to_orig.size());
  if (present == 1) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(a.size(), k);
    p.col(to_orig[0]).setOnes();
    return floor_rows(p);
  }
  ClassVector dense(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) dense[i] = to_dense[a[i]];
  const Eigen::MatrixXd pd = posteriors_present(backend, z, dense, present);
  if (present == k) return pd;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(a.size(), k);
  for (int c = 0; c < present; ++c) p.col(to_orig[c]) = pd.col(c);
  return floor_rows(p);
}

double cond_entropy(const ClassVector& a, const Eigen::MatrixXd& conditioners,
                    const EstimatorBackend& backend) {
  return -observed_log(fit_posteriors(backend, conditioners, a), a).mean();
}

SharedLogPosteriors shared_log_posteriors(const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                                          const ClassVector& a, const EstimatorBackend& backend) {
  check_lengths(y, s, a);
  SharedLogPosteriors out;
  const Eigen::Index n = a.size();
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(a.maxCoeff() + 1);
  for (Eigen::Index i = 0; i < n; ++i) counts[a[i]] += 1.0;
  out.log_prior.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.log_prior[i] = std::log(counts[a[i]] / double(n));

  Eigen::MatrixXd ys(n, 2);
  ys.col(0) = s;
  ys.col(1) = y;
  out.given_s = observed_log(fit_posteriors(backend, s, a), a);
  out.given_y = observed_log(fit_posteriors(backend, y, a), a);
  out.given_ys = observed_log(fit_posteriors(backend, ys, a), a);
  return out;
}

MiEstimate nmi_from_shared(Criterion criterion, const SharedLogPosteriors& shared,
                           const std::string& id) {
  MiEstimate est;
  est.estimator_id = id;
  switch (criterion) {
    case Criterion::Independence:
      est.mi = (shared.given_s - shared.log_prior).mean();
      est.normaliser = -shared.log_prior.mean();
      break;
    case Criterion::Separation:
      est.mi = (shared.given_ys - shared.given_y).mean();
      est.normaliser = -shared.given_y.mean();
      break;
    case Criterion::Sufficiency:
      est.mi = (shared.given_ys - shared.given_s).mean();
      est.normaliser = -shared.given_s.mean();
      break;
  }
  if (!(est.normaliser > kDegenerateNormaliser)) {
    throw NormaliserDegenerate("estimate_nmi(" + to_string(criterion) + "): normaliser " +
                               std::to_string(est.normaliser) + " nats is degenerate");
  }
  est.nmi = est.mi / est.normaliser;
  return est;
}

MiEstimate estimate_nmi(Criterion criterion, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                        const ClassVector& a, const EstimatorBackend& backend) {
  check_lengths(y, s, a);
  const std::string id = estimator_id(backend);
  SharedLogPosteriors shared;
  const Eigen::Index n = a.size();
  Eigen::MatrixXd ys(n, 2);
  ys.col(0) = s;
  ys.col(1) = y;
  switch (criterion) {
    case Criterion::Independence: {
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(a.maxCoeff() + 1);
      for (Eigen::Index i = 0; i < n; ++i) counts[a[i]] += 1.0;
      shared.log_prior.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) shared.log_prior[i] = std::log(counts[a[i]] / double(n));
      shared.given_s = observed_log(fit_posteriors(backend, s, a), a);
      break;
    }
    case Criterion::Separation:
      shared.given_y = observed_log(fit_posteriors(backend, y, a), a);
      shared.given_ys = observed_log(fit_posteriors(backend, ys, a), a);
      break;
    case Criterion::Sufficiency:
      shared.given_s = observed_log(fit_posteriors(backend, s, a), a);
      shared.given_ys = observed_log(fit_posteriors(backend, ys, a), a);
      break;
  }
  return nmi_from_shared(criterion, shared, id);
}

std::array<MiEstimate, 3> estimate_all_nmi(const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                                           const ClassVector& a, const EstimatorBackend& backend) {
  const SharedLogPosteriors shared = shared_log_posteriors(y, s, a, backend);
  const std::string id = estimator_id(backend);
  std::array<MiEstimate, 3> out;
  for (std::size_t c = 0; c < kAllCriteria.size(); ++c) {
    try {
      out[c] = nmi_from_shared(kAllCriteria[c], shared, id);
    } catch (const NormaliserDegenerate&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      out[c] = MiEstimate{nan, nan, nan, id};
    }
  }
  return out;
}

}  // namespace fairmi

#include "fairmi/oracle.hpp"

#include <Eigen/LU>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "fairmi/errors.hpp"

namespace fairmi {
namespace {

double log_normal_1d(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_normal_2d(const Eigen::Vector2d& x, const Eigen::Vector2d& mean,
                     const Eigen::Matrix2d& cov) {
  const Eigen::Vector2d d = x - mean;
  const double det = cov.determinant();
  return -0.5 * (std::log(4.0 * std::numbers::pi * std::numbers::pi * det) +
                 d.dot(cov.inverse() * d));
}

double log_prior(const Scenario& sc, int a) {
  const double pr = sc.prior(a);
  return pr > 0.0 ? std::log(pr) : -std::numeric_limits<double>::infinity();
}

// log p(a | .) from unnormalised per-class log joint terms.
double log_posterior(const std::array<double, 2>& log_joint, int a) {
  const double mx = std::max(log_joint[0], log_joint[1]);
  const double lse = mx + std::log(std::exp(log_joint[0] - mx) + std::exp(log_joint[1] - mx));
  return log_joint[a] - lse;
}

double log_post_y(const Scenario& sc, int a, double y) {
  return log_posterior({log_prior(sc, 0) + log_normal_1d(y, sc.mean0[0], sc.cov0(0, 0)),
                        log_prior(sc, 1) + log_normal_1d(y, sc.mean1[0], sc.cov1(0, 0))},
                       a);
}

double log_post_ys(const Scenario& sc, int a, double y, double s) {
  const Eigen::Vector2d x(y, s);
  return log_posterior({log_prior(sc, 0) + log_normal_2d(x, sc.mean0, sc.cov0),
                        log_prior(sc, 1) + log_normal_2d(x, sc.mean1, sc.cov1)},
                       a);
}

MonteCarloEstimate average(const Eigen::VectorXd& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

void check_oracle_inputs(const Scenario& sc, Eigen::Index n_samples) {
  sc.validate();
  if (n_samples < kMinOracleSamples) {
    throw ConfigError("monte_carlo_mi: n_samples must be >= " + std::to_string(kMinOracleSamples));
  }
}

}  // namespace

OracleTarget oracle_target(Criterion c) {
  switch (c) {
    case Criterion::Independence: return OracleTarget::ScoreSensitive;
    case Criterion::Separation: return OracleTarget::ScoreSensitiveGivenTarget;
    case Criterion::Sufficiency: return OracleTarget::TargetSensitiveGivenScore;
  }
  return OracleTarget::ScoreSensitive;
}

double scenario_log_posterior_s(const Scenario& sc, int a, double s) {
  return log_posterior({log_prior(sc, 0) + log_normal_1d(s, sc.mean0[1], sc.cov0(1, 1)),
                        log_prior(sc, 1) + log_normal_1d(s, sc.mean1[1], sc.cov1(1, 1))},
                       a);
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

MonteCarloEstimate monte_carlo_mi(const Scenario& sc, OracleTarget target, Eigen::Index n_samples,
                                  std::uint64_t seed) {
  check_oracle_inputs(sc, n_samples);
  const ScenarioSample smp = sample_scenario(sc, n_samples, seed);
  Eigen::VectorXd ratio(n_samples);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    const int a = smp.a[i];
    const double y = smp.y[i];
    const double s = smp.s[i];
    switch (target) {
      case OracleTarget::ScoreSensitive:
        ratio[i] = scenario_log_posterior_s(sc, a, s) - log_prior(sc, a);
        break;
      case OracleTarget::ScoreSensitiveGivenTarget:
        ratio[i] = log_post_ys(sc, a, y, s) - log_post_y(sc, a, y);
        break;
      case OracleTarget::TargetSensitiveGivenScore:
        ratio[i] = log_post_ys(sc, a, y, s) - scenario_log_posterior_s(sc, a, s);
        break;
    }
  }
  return average(ratio);
}

MonteCarloEstimate monte_carlo_normaliser(const Scenario& sc, OracleTarget target,
                                          Eigen::Index n_samples, std::uint64_t seed) {
  check_oracle_inputs(sc, n_samples);
  if (target == OracleTarget::ScoreSensitive) return {binary_entropy(sc.p), 0.0};
  const ScenarioSample smp = sample_scenario(sc, n_samples, seed);
  Eigen::VectorXd nll(n_samples);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    nll[i] = target == OracleTarget::ScoreSensitiveGivenTarget
                 ? -log_post_y(sc, smp.a[i], smp.y[i])
                 : -scenario_log_posterior_s(sc, smp.a[i], smp.s[i]);
  }
  return average(nll);
}

}  // namespace fairmi

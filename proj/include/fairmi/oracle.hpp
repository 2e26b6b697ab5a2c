#pragma once

// Ground-truth information quantities for Bernoulli -> 2-D Gaussian scenarios,
// by Monte-Carlo averaging of exact log-density ratios.

#include <cstdint>

#include "fairmi/data.hpp"
#include "fairmi/infometrics.hpp"

namespace fairmi {

enum class OracleTarget {
  ScoreSensitive,             ///< I(S; A)
  ScoreSensitiveGivenTarget,  ///< I(S; A | Y)
  TargetSensitiveGivenScore,  ///< I(Y; A | S)
};

OracleTarget oracle_target(Criterion c);

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Minimum sample count accepted by the oracle.
inline constexpr Eigen::Index kMinOracleSamples = 10000;

/// Samples (Y, S, A) from the scenario and averages the exact log ratio
///   (S;A):   log p(a|s) - log p(a)
///   (S;A|Y): log p(a|y,s) - log p(a|y)
///   (Y;A|S): log p(a|y,s) - log p(a|s)
/// which equal log p(s|a)/p(s), log p(s|y,a)/p(s|y) and log p(y|s,a)/p(y|s).
MonteCarloEstimate monte_carlo_mi(const Scenario& sc, OracleTarget target, Eigen::Index n_samples,
                                  std::uint64_t seed);

/// The matching NMI normaliser: H(A) in closed form for (S;A), and Monte-Carlo
/// H(A|Y) or H(A|S) for the conditional targets.
MonteCarloEstimate monte_carlo_normaliser(const Scenario& sc, OracleTarget target,
                                          Eigen::Index n_samples, std::uint64_t seed);

/// Exact class posterior log p(a | s) from the scenario's S marginals.
double scenario_log_posterior_s(const Scenario& sc, int a, double s);

/// -p log p - (1-p) log(1-p).
double binary_entropy(double p);

}  // namespace fairmi

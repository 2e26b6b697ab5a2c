#pragma once

// Ridge-penalised multinomial logistic regression on basis features. Used as
// the slow reference classifier next to LSPC, and as the inner model of the
// random-Fourier-feature estimator.

#include <Eigen/Core>

#include "fairmi/basis.hpp"
#include "fairmi/lspc.hpp"

namespace fairmi {

struct LogisticParams {
  double lambda_c = 1e-3;
  int max_iter = 100;
  double grad_tol = 1e-8;
};

/// Softmax model with class 0 as reference: logits eta_0 = 0 and
/// eta_k = v_k^T phi for k >= 1. Column 0 of phi is the intercept and is not
/// penalised.
struct LogisticModel {
  Eigen::MatrixXd weights;  // (K-1) x D
  int iterations = 0;
  double grad_norm = 0.0;

  int classes() const { return static_cast<int>(weights.rows()) + 1; }
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& phi) const;
};

/// Newton-Raphson with backtracking on
///   J(V) = -(1/N) sum_i log p(a_i | phi_i) + lambda_c * ||V[:, 1:]||_F^2.
/// Stops when the max-norm of the gradient is below grad_tol, or when the
/// Newton decrement falls under the rounding level of J. Throws FitError if
/// neither happens within max_iter steps.
LogisticModel fit_logistic(const Eigen::MatrixXd& phi, const ClassVector& a, int k,
                           const LogisticParams& params,
                           const Eigen::MatrixXd* warm_start = nullptr);

/// Fits on basis-expanded Z and returns the in-sample softmax posteriors (N x K).
Eigen::MatrixXd fit_predict_logistic(const Eigen::MatrixXd& Z, const ClassVector& a,
                                     double lambda_c, const BasisSpec& basis);

struct LogisticLogLikelihood {
  double value = 0.0;
  Eigen::MatrixXd grad_z;  // N x p
  Eigen::VectorXd log_prob;
  Eigen::MatrixXd weights;  // fitted V, reusable as the next warm start
};

/// (1/N) sum_i log p(a_i | z_i) with the logistic weights refitted on (Z, A).
/// The gradient accounts for dV*/dZ through the implicit function theorem
/// (stationarity of J at the inner optimum).
LogisticLogLikelihood logistic_log_likelihood(const BasisSpec& basis, const Eigen::MatrixXd& Z,
                                              const ClassVector& a, int k,
                                              const LogisticParams& params, bool with_gradient,
                                              const Eigen::MatrixXd* warm_start = nullptr);

}  // namespace fairmi

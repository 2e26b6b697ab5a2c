#pragma once

// Least-squares probabilistic classification (LSPC) of a categorical
// attribute from low-dimensional inputs, with softplus-normalised posteriors.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <string>

#include "fairmi/basis.hpp"
#include "fairmi/errors.hpp"

namespace fairmi {

using ClassVector = Eigen::VectorXi;

struct LspcParams {
  double lambda_c = 1e-3;  ///< ridge coefficient, multiplied by N inside the fit
  double beta = 10.0;      ///< softplus sharpness
  double prob_floor = 1e-6;
};

/// Smooth surrogate of max(0, t): log(1 + exp(beta t)) / beta.
template <typename Scalar>
Scalar softplus(Scalar t, Scalar beta) {
  using std::exp;
  using std::log1p;
  const Scalar bt = beta * t;
  if (bt > Scalar(30)) return t;  // log1p(exp(-30)) / beta is below double eps relative to t
  return log1p(exp(bt)) / beta;
}

/// d softplus / dt = logistic(beta t).
template <typename Scalar>
Scalar softplus_derivative(Scalar t, Scalar beta) {
  using std::exp;
  const Scalar bt = beta * t;
  if (bt >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-bt));
  const Scalar e = exp(bt);
  return e / (Scalar(1) + e);
}

inline void check_classes(const ClassVector& a, Eigen::Index n, int k, const char* where) {
  if (a.size() != n) {
    throw DimensionError(std::string(where) + ": class vector length " + std::to_string(a.size()) +
                         " != " + std::to_string(n));
  }
  if (k < 1) throw DataError(std::string(where) + ": class count must be positive");
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || a[i] >= k) {
      throw DataError(std::string(where) + ": class label " + std::to_string(a[i]) +
                      " outside [0, " + std::to_string(k) + ")");
    }
  }
}

template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> one_hot(const ClassVector& a, int k) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> t =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(a.size(), k);
  for (Eigen::Index i = 0; i < a.size(); ++i) t(i, a[i]) = Scalar(1);
  return t;
}

namespace detail {

// Cholesky of Phi^T Phi + lambda_c N I. Rejects singular or numerically
// indefinite systems.
template <typename Scalar>
Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> gram_factor(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& phi, Scalar lambda_c) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (!(lambda_c >= Scalar(0))) throw FitError("lspc_fit: lambda_c must be >= 0");
  if (!phi.allFinite()) throw FitError("lspc_fit: non-finite basis features");
  const Eigen::Index d = phi.cols();
  Mat gram = Mat::Zero(d, d);
  gram.template selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  gram = gram.template selfadjointView<Eigen::Lower>();
  gram.diagonal().array() += lambda_c * Scalar(phi.rows());
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > Scalar(1e-14))) {
    throw FitError("lspc_fit: singular Gram matrix (N=" + std::to_string(phi.rows()) +
                   ", D=" + std::to_string(d) + ")");
  }
  return llt;
}

}  // namespace detail

/// Closed-form LSPC weights W (K x D) = ((Phi^T Phi + lambda_c N I)^{-1} Phi^T 1_A)^T.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> lspc_fit(
    const Eigen::MatrixBase<Derived>& Phi, const ClassVector& a, int k,
    typename Derived::Scalar lambda_c) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  check_classes(a, Phi.rows(), k, "lspc_fit");
  const Mat phi = Phi;
  const auto llt = detail::gram_factor<Scalar>(phi, lambda_c);
  const Mat rhs = phi.transpose() * one_hot<Scalar>(a, k);
  return llt.solve(rhs).transpose();
}

template <typename Scalar = double>
struct LspcModel {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> weights;  // K x D
  BasisSpec basis;
  Scalar beta = Scalar(10);
  Scalar lambda_c = Scalar(1e-3);
  Scalar prob_floor = Scalar(1e-6);

  int classes() const { return static_cast<int>(weights.rows()); }
};

/// Fits an LSPC model on raw inputs Z (N x p, leading column of ones).
template <typename Derived>
LspcModel<typename Derived::Scalar> fit_lspc_model(const BasisSpec& basis,
                                                   const Eigen::MatrixBase<Derived>& Z,
                                                   const ClassVector& a, int k,
                                                   const LspcParams& params) {
  using Scalar = typename Derived::Scalar;
  LspcModel<Scalar> model;
  model.basis = basis;
  model.beta = Scalar(params.beta);
  model.lambda_c = Scalar(params.lambda_c);
  model.prob_floor = Scalar(params.prob_floor);
  model.weights = lspc_fit(expand(basis, Z), a, k, Scalar(params.lambda_c));
  return model;
}

/// Maps pre-activations R (N x K) to posteriors: softplus-normalise each row,
/// then floor-and-renormalise as q = (p + eps) / (1 + K eps), so every entry is
/// at least eps / (1 + K eps). Rows whose softplus mass underflows below K eps
/// become uniform.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> posteriors_from_activations(
    const Eigen::MatrixBase<Derived>& R, typename Derived::Scalar beta,
    typename Derived::Scalar prob_floor) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index k = R.cols();
  const Scalar denom = Scalar(1) + Scalar(k) * prob_floor;
  Mat p(R.rows(), k);
  for (Eigen::Index i = 0; i < R.rows(); ++i) {
    Scalar total(0);
    for (Eigen::Index c = 0; c < k; ++c) {
      p(i, c) = softplus(Scalar(R(i, c)), beta);
      total += p(i, c);
    }
    if (!(total >= Scalar(k) * prob_floor)) {
      p.row(i).setConstant(Scalar(1) / Scalar(k));
      continue;
    }
    for (Eigen::Index c = 0; c < k; ++c) p(i, c) = (p(i, c) / total + prob_floor) / denom;
  }
  return p;
}

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> posteriors(
    const LspcModel<Scalar>& model, const Eigen::MatrixBase<Derived>& Z) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat phi = expand(model.basis, Z);
  if (phi.cols() != model.weights.cols()) throw DimensionError("posteriors: weight/basis mismatch");
  return posteriors_from_activations(Mat(phi * model.weights.transpose()), model.beta,
                                     model.prob_floor);
}

/// Mean log posterior of the observed classes, (1/N) sum_i log p(a_i | z_i),
/// where the LSPC weights are refitted on (Z, A) itself.
template <typename Scalar = double>
struct LspcLogLikelihood {
  Scalar value{};
  /// d value / d Z (N x p), including the dependence of the refitted weights on Z.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> grad_z;
  /// Per-row log p(a_i | z_i).
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_prob;
};

/// Evaluates the refit-and-score functional. When `with_gradient` is set the
/// cotangent is propagated through the posterior normalisation, the closed-form
/// solve (adjoint of the Gram factorisation) and the basis expansion.
template <typename Derived>
LspcLogLikelihood<typename Derived::Scalar> lspc_log_likelihood(const BasisSpec& basis,
                                                                const Eigen::MatrixBase<Derived>& Z,
                                                                const ClassVector& a, int k,
                                                                const LspcParams& params,
                                                                bool with_gradient) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index n = Z.rows();
  check_classes(a, n, k, "lspc_log_likelihood");
  const Scalar beta(params.beta);
  const Scalar eps(params.prob_floor);
  const Scalar lambda_c(params.lambda_c);
  const Scalar denom = Scalar(1) + Scalar(k) * eps;

  const Mat phi = expand(basis, Z);
  const Mat targets = one_hot<Scalar>(a, k);
  const auto llt = detail::gram_factor<Scalar>(phi, lambda_c);
  const Mat m = llt.solve(Mat(phi.transpose() * targets));  // D x K (= W^T)
  const Mat r = phi * m;                                      // N x K

  LspcLogLikelihood<Scalar> out;
  out.log_prob.resize(n);
  Mat dr = Mat::Zero(n, k);
  const Scalar inv_n = Scalar(1) / Scalar(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar total(0);
    for (Eigen::Index c = 0; c < k; ++c) total += softplus(Scalar(r(i, c)), beta);
    const int ai = a[i];
    if (!(total >= Scalar(k) * eps)) {
      out.log_prob[i] = -std::log(Scalar(k));
      continue;  // uniform row, locally constant
    }
    const Scalar sp_a = softplus(Scalar(r(i, ai)), beta);
    const Scalar q = (sp_a / total + eps) / denom;
    out.log_prob[i] = std::log(q);
    if (!with_gradient) continue;
    // d log q / d sp_c = (delta_ca / total - sp_a / total^2) / (q * denom)
    const Scalar scale = inv_n / (q * denom);
    for (Eigen::Index c = 0; c < k; ++c) {
      const Scalar dsp = (c == ai ? Scalar(1) / total : Scalar(0)) - sp_a / (total * total);
      dr(i, c) = scale * dsp * softplus_derivative(Scalar(r(i, c)), beta);
    }
  }
  out.value = out.log_prob.mean();
  if (!with_gradient) return out;

  // r = phi m, m = G^{-1} B, G = phi^T phi + lambda N I, B = phi^T T.
  const Mat dm = phi.transpose() * dr;  // D x K
  const Mat db = llt.solve(dm);         // D x K
  const Mat dg = -db * m.transpose();   // D x D
  Mat dphi = dr * m.transpose() + targets * db.transpose() + phi * (dg + dg.transpose());
  out.grad_z = expand_backward(basis, Z, dphi);
  return out;
}

}  // namespace fairmi

#include "fairmi/logistic.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstdio>
#include <string>

namespace fairmi {
namespace {

struct SoftmaxState {
  Eigen::MatrixXd prob;   // N x K
  Eigen::VectorXd log_p;  // log p(a_i | phi_i)
  double objective = 0.0;
};

double penalty(const Eigen::MatrixXd& v, double lambda_c) {
  if (v.cols() <= 1) return 0.0;
  return lambda_c * v.rightCols(v.cols() - 1).squaredNorm();
}

SoftmaxState softmax_state(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& v,
                           const ClassVector& a, double lambda_c) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index k = v.rows() + 1;
  Eigen::MatrixXd eta(n, k);
  eta.col(0).setZero();
  eta.rightCols(k - 1) = phi * v.transpose();
  SoftmaxState s;
  s.prob.resize(n, k);
  s.log_p.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = eta.row(i).maxCoeff();
    const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
    s.prob.row(i) = (eta.row(i).array() - lse).exp();
    s.log_p[i] = eta(i, a[i]) - lse;
  }
  s.objective = -s.log_p.mean() + penalty(v, lambda_c);
  return s;
}

// Gradient of J with respect to V, (K-1) x D.
Eigen::MatrixXd objective_gradient(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& v,
                                   const Eigen::MatrixXd& residual, double lambda_c) {
  // residual = P - T restricted to classes 1..K-1 (N x (K-1))
  Eigen::MatrixXd g = residual.transpose() * phi / static_cast<double>(phi.rows());
  if (v.cols() > 1) g.rightCols(v.cols() - 1) += 2.0 * lambda_c * v.rightCols(v.cols() - 1);
  return g;
}

Eigen::MatrixXd objective_hessian(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& prob,
                                  double lambda_c) {
  const Eigen::Index n = phi.rows();
  const Eigen::Index d = phi.cols();
  const Eigen::Index km1 = prob.cols() - 1;
  Eigen::MatrixXd h(km1 * d, km1 * d);
  for (Eigen::Index c = 0; c < km1; ++c) {
    for (Eigen::Index l = c; l < km1; ++l) {
      Eigen::VectorXd w = -prob.col(c + 1).cwiseProduct(prob.col(l + 1));
      if (c == l) w += prob.col(c + 1);
      const Eigen::MatrixXd block =
          phi.transpose() * (phi.array().colwise() * w.array()).matrix() / static_cast<double>(n);
      h.block(c * d, l * d, d, d) = block;
      if (l != c) h.block(l * d, c * d, d, d) = block.transpose();
    }
    for (Eigen::Index j = 1; j < d; ++j) h(c * d + j, c * d + j) += 2.0 * lambda_c;
  }
  return h;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& v) {
  Eigen::VectorXd out(v.size());
  for (Eigen::Index c = 0; c < v.rows(); ++c) out.segment(c * v.cols(), v.cols()) = v.row(c).transpose();
  return out;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& x, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd v(rows, cols);
  for (Eigen::Index c = 0; c < rows; ++c) v.row(c) = x.segment(c * cols, cols).transpose();
  return v;
}

Eigen::MatrixXd residual_of(const SoftmaxState& s, const ClassVector& a) {
  Eigen::MatrixXd r = s.prob.rightCols(s.prob.cols() - 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] > 0) r(i, a[i] - 1) -= 1.0;
  }
  return r;
}

}  // namespace

Eigen::MatrixXd LogisticModel::predict_proba(const Eigen::MatrixXd& phi) const {
  if (phi.cols() != weights.cols()) throw DimensionError("LogisticModel: feature dimension mismatch");
  ClassVector dummy = ClassVector::Zero(phi.rows());
  return softmax_state(phi, weights, dummy, 0.0).prob;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& phi, const ClassVector& a, int k,
                           const LogisticParams& params, const Eigen::MatrixXd* warm_start) {
  check_classes(a, phi.rows(), k, "fit_logistic");
  if (k < 2) throw DataError("fit_logistic: need at least two classes");
  if (!phi.allFinite()) throw FitError("fit_logistic: non-finite features");
  const Eigen::Index d = phi.cols();
  LogisticModel model;
  if (warm_start != nullptr && warm_start->rows() == k - 1 && warm_start->cols() == d &&
      warm_start->allFinite()) {
    model.weights = *warm_start;
  } else {
    model.weights = Eigen::MatrixXd::Zero(k - 1, d);
  }

  SoftmaxState state = softmax_state(phi, model.weights, a, params.lambda_c);
  for (int it = 0;; ++it) {
    const Eigen::MatrixXd grad =
        objective_gradient(phi, model.weights, residual_of(state, a), params.lambda_c);
    model.grad_norm = grad.cwiseAbs().maxCoeff();
    model.iterations = it;
    if (model.grad_norm < params.grad_tol) return model;
    if (it >= params.max_iter) break;

    const Eigen::MatrixXd hess = objective_hessian(phi, state.prob, params.lambda_c);
    const Eigen::VectorXd g = flatten(grad);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(g) >= 0.0) {
      Eigen::MatrixXd damped = hess;
      damped.diagonal().array() += 1e-6 + hess.diagonal().cwiseAbs().maxCoeff() * 1e-8;
      step = damped.ldlt().solve(-g);
      if (!step.allFinite() || step.dot(g) >= 0.0) step = -g;
    }

    const double slope = g.dot(step);
    // Newton decrement below rounding of J: no representable progress is left.
    if (-slope <= 1e-15 * (1.0 + std::abs(state.objective))) return model;
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Eigen::MatrixXd trial = model.weights + unflatten(t * step, k - 1, d);
      SoftmaxState ts = softmax_state(phi, trial, a, params.lambda_c);
      if (std::isfinite(ts.objective) && ts.objective <= state.objective + 1e-4 * t * slope) {
        model.weights = std::move(trial);
        state = std::move(ts);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // At the numerical floor of J; accept only if the gradient is already tiny.
      if (model.grad_norm < 1e3 * params.grad_tol) return model;
      break;
    }
  }
  char msg[128];
  std::snprintf(msg, sizeof msg, "fit_logistic: no convergence after %d Newton steps (|grad|_inf = %.3g)",
                model.iterations, model.grad_norm);
  throw FitError(msg);
}

Eigen::MatrixXd fit_predict_logistic(const Eigen::MatrixXd& Z, const ClassVector& a,
                                     double lambda_c, const BasisSpec& basis) {
  if (a.size() == 0) throw DataError("fit_predict_logistic: empty input");
  const int k = a.maxCoeff() + 1;
  const Eigen::MatrixXd phi = expand(basis, Z);
  LogisticParams params;
  params.lambda_c = lambda_c;
  return fit_logistic(phi, a, k, params).predict_proba(phi);
}

LogisticLogLikelihood logistic_log_likelihood(const BasisSpec& basis, const Eigen::MatrixXd& Z,
                                              const ClassVector& a, int k,
                                              const LogisticParams& params, bool with_gradient,
                                              const Eigen::MatrixXd* warm_start) {
  const Eigen::MatrixXd phi = expand(basis, Z);
  const LogisticModel model = fit_logistic(phi, a, k, params, warm_start);
  const SoftmaxState s = softmax_state(phi, model.weights, a, params.lambda_c);

  LogisticLogLikelihood out;
  out.log_prob = s.log_p;
  out.value = s.log_p.mean();
  out.weights = model.weights;
  if (!with_gradient) return out;

  const Eigen::Index n = phi.rows();
  const Eigen::Index d = phi.cols();
  const Eigen::MatrixXd& v = model.weights;

  // dl/dV at the inner optimum is 2 lambda_c V (penalised columns only).
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k - 1, d);
  if (d > 1) g.rightCols(d - 1) = 2.0 * params.lambda_c * v.rightCols(d - 1);
  const Eigen::MatrixXd hess = objective_hessian(phi, s.prob, params.lambda_c);
  const Eigen::MatrixXd u = unflatten(hess.ldlt().solve(flatten(g)), k - 1, d);

  const Eigen::MatrixXd pk = s.prob.rightCols(k - 1);  // N x (K-1)
  const Eigen::MatrixXd resid = residual_of(s, a);    // P - T, classes >= 1
  const Eigen::MatrixXd psi = phi * u.transpose();     // N x (K-1)
  const Eigen::VectorXd psi_bar = (pk.cwiseProduct(psi)).rowwise().sum();
  const Eigen::MatrixXd mean_v = pk * v;               // sum_j p_ij v_j, N x D

  Eigen::MatrixXd dphi = -mean_v;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a[i] > 0) dphi.row(i) += v.row(a[i] - 1);
  }
  dphi -= resid * u;
  dphi -= (pk.array() * (psi.array().colwise() - psi_bar.array())).matrix() * v;
  dphi /= static_cast<double>(n);
  out.grad_z = expand_backward(basis, Z, dphi);
  return out;
}

}  // namespace fairmi

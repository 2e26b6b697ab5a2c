#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// safeguarded cubic interpolation).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <vector>

namespace fairmi {

template <typename Scalar = double>
struct LbfgsOptions {
  int max_iter = 500;
  Scalar grad_tol = Scalar(1e-6);  ///< stop when |grad|_inf < grad_tol
  int history_size = 10;
  int max_linesearch = 40;
  Scalar c1 = Scalar(1e-4);  ///< sufficient decrease
  Scalar c2 = Scalar(0.9);   ///< curvature
};

enum class LbfgsStatus { Converged, MaxIterations, LineSearchFailed, NonFinite };

inline const char* to_string(LbfgsStatus s) {
  switch (s) {
    case LbfgsStatus::Converged: return "converged";
    case LbfgsStatus::MaxIterations: return "max_iterations";
    case LbfgsStatus::LineSearchFailed: return "line_search_failed";
    case LbfgsStatus::NonFinite: return "non_finite";
  }
  return "unknown";
}

template <typename Scalar = double>
struct LbfgsResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector x;
  Scalar f{};
  Vector grad;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::MaxIterations;
  std::vector<Scalar> trace;  ///< objective at x0 and at every accepted iterate
};

namespace detail {

// Minimiser of the cubic interpolating (a, fa, ga) and (b, fb, gb), clamped
// into the interior of [min(a,b), max(a,b)]; falls back to bisection.
template <typename Scalar>
Scalar cubic_step(Scalar a, Scalar fa, Scalar ga, Scalar b, Scalar fb, Scalar gb) {
  const Scalar lo = std::min(a, b);
  const Scalar hi = std::max(a, b);
  const Scalar d1 = ga + gb - Scalar(3) * (fa - fb) / (a - b);
  const Scalar disc = d1 * d1 - ga * gb;
  Scalar t = (a + b) / Scalar(2);
  if (disc >= Scalar(0) && std::isfinite(disc)) {
    const Scalar d2 = (b > a ? Scalar(1) : Scalar(-1)) * std::sqrt(disc);
    const Scalar denom = gb - ga + Scalar(2) * d2;
    if (denom != Scalar(0)) t = b - (b - a) * (gb + d2 - d1) / denom;
  }
  const Scalar margin = Scalar(0.1) * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = (a + b) / Scalar(2);
  return t;
}

}  // namespace detail

/// Minimises f starting from x0. `fg(x, grad)` returns f(x) and writes the
/// gradient into `grad`. Exceptions thrown by fg during a line search are
/// treated as an infinite objective at that trial point. The returned x is the
/// best point seen (every accepted step satisfies sufficient decrease).
template <typename Scalar, typename Fn>
LbfgsResult<Scalar> lbfgs_minimize(Fn&& fg, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x0,
                                   const LbfgsOptions<Scalar>& opt = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  LbfgsResult<Scalar> res;
  res.x = std::move(x0);
  res.grad.resize(res.x.size());

  auto eval = [&](const Vector& x, Vector& g) -> Scalar {
    ++res.evaluations;
    try {
      g.resize(x.size());
      const Scalar f = fg(x, g);
      if (!std::isfinite(f) || !g.allFinite()) return inf;
      return f;
    } catch (const std::exception&) {
      return inf;
    }
  };

  res.f = eval(res.x, res.grad);
  if (!std::isfinite(res.f)) {
    res.status = LbfgsStatus::NonFinite;
    return res;
  }
  res.trace.push_back(res.f);

  std::deque<Vector> s_hist;
  std::deque<Vector> y_hist;
  std::deque<Scalar> rho_hist;
  bool restarted = false;

  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    if (res.grad.cwiseAbs().maxCoeff() < opt.grad_tol) {
      res.status = LbfgsStatus::Converged;
      return res;
    }

    // Two-loop recursion: d = -H g.
    Vector q = res.grad;
    const std::size_t m = s_hist.size();
    std::vector<Scalar> alpha(m);
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vector d = -q;
    Scalar dg0 = d.dot(res.grad);
    if (!(dg0 < Scalar(0))) {
      d = -res.grad;
      dg0 = d.dot(res.grad);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Strong-Wolfe line search along d.
    const Scalar f0 = res.f;
    Scalar step = m == 0 ? std::min(Scalar(1), Scalar(1) / res.grad.norm()) : Scalar(1);
    Scalar prev_step = 0;
    Scalar prev_f = f0;
    Scalar prev_dg = dg0;
    Vector x_new(res.x.size());
    Vector g_new(res.x.size());
    Scalar f_new = inf;
    bool found = false;

    auto try_point = [&](Scalar a, Scalar& dg_out) -> Scalar {
      x_new = res.x + a * d;
      const Scalar f = eval(x_new, g_new);
      dg_out = std::isfinite(f) ? g_new.dot(d) : Scalar(0);
      return f;
    };

    auto zoom = [&](Scalar lo, Scalar f_lo, Scalar dg_lo, Scalar hi, Scalar f_hi, Scalar dg_hi,
                    int budget) {
      for (int z = 0; z < budget; ++z) {
        Scalar a = std::isfinite(f_hi) ? detail::cubic_step(lo, f_lo, dg_lo, hi, f_hi, dg_hi)
                                       : (lo + hi) / Scalar(2);
        Scalar dg = 0;
        const Scalar f = try_point(a, dg);
        if (!std::isfinite(f) || f > f0 + opt.c1 * a * dg0 || f >= f_lo) {
          hi = a;
          f_hi = f;
          dg_hi = dg;
        } else {
          if (std::abs(dg) <= -opt.c2 * dg0) {
            f_new = f;
            return true;
          }
          if (dg * (hi - lo) >= Scalar(0)) {
            hi = lo;
            f_hi = f_lo;
            dg_hi = dg_lo;
          }
          lo = a;
          f_lo = f;
          dg_lo = dg;
        }
        if (std::abs(hi - lo) <= std::numeric_limits<Scalar>::epsilon() * std::max(Scalar(1), lo)) {
          break;
        }
      }
      // Accept the best sufficient-decrease point if the curvature test never passed.
      if (lo > Scalar(0) && f_lo < f0) {
        Scalar dg = 0;
        f_new = try_point(lo, dg);
        return std::isfinite(f_new) && f_new < f0;
      }
      return false;
    };

    for (int ls = 0; ls < opt.max_linesearch; ++ls) {
      Scalar dg = 0;
      const Scalar f = try_point(step, dg);
      if (!std::isfinite(f) || f > f0 + opt.c1 * step * dg0 || (ls > 0 && f >= prev_f)) {
        found = zoom(prev_step, prev_f, prev_dg, step, f, dg, opt.max_linesearch);
        break;
      }
      if (std::abs(dg) <= -opt.c2 * dg0) {
        f_new = f;
        found = true;
        break;
      }
      if (dg >= Scalar(0)) {
        found = zoom(step, f, dg, prev_step, prev_f, prev_dg, opt.max_linesearch);
        break;
      }
      prev_step = step;
      prev_f = f;
      prev_dg = dg;
      step *= Scalar(2);
    }

    if (!found) {
      if (!restarted && m > 0) {
        // Drop the curvature memory once and retry along steepest descent.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        restarted = true;
        --res.iterations;
        continue;
      }
      res.status = LbfgsStatus::LineSearchFailed;
      return res;
    }
    restarted = false;

    Vector s = x_new - res.x;
    Vector y = g_new - res.grad;
    const Scalar sy = s.dot(y);
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;
    res.trace.push_back(res.f);
    if (sy > std::numeric_limits<Scalar>::epsilon() * y.squaredNorm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(Scalar(1) / sy);
      if (static_cast<int>(s_hist.size()) > opt.history_size) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  res.status = res.grad.cwiseAbs().maxCoeff() < opt.grad_tol ? LbfgsStatus::Converged
                                                              : LbfgsStatus::MaxIterations;
  return res;
}

}  // namespace fairmi

#pragma once

#include <Eigen/Core>

#include <random>

#include "fairmi/lspc.hpp"

namespace fairmi::test {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

inline ClassVector random_classes(Eigen::Index n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(0, k - 1);
  ClassVector a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = i < k ? static_cast<int>(i) : u(rng);
  return a;
}

// Central differences of a scalar function, step h.
template <typename F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

inline double rel_inf_error(const Eigen::VectorXd& g, const Eigen::VectorXd& ref) {
  return (g - ref).lpNorm<Eigen::Infinity>() / std::max(ref.lpNorm<Eigen::Infinity>(), 1e-300);
}

}  // namespace fairmi::test

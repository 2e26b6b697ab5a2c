#pragma once

#include <Eigen/Core>

#include <string>

#include "fairmi/errors.hpp"

namespace fairmi {

enum class BasisKind { Identity, FeatureCross };

/// Row-wise feature map phi: R^p -> R^D applied to classifier inputs
/// z = [1, u_1, ..., u_m] (m = p - 1).
///
/// Identity keeps z as is. FeatureCross produces every monomial of degree <= 2
/// in u, ordered as: constant, u_1..u_m, then u_i*u_j for i <= j in
/// lexicographic order. For z = [1, s, y] that is [1, s, y, s^2, s*y, y^2].
struct BasisSpec {
  BasisKind kind = BasisKind::Identity;
  Eigen::Index input_dim = 2;

  static BasisSpec identity(Eigen::Index p) { return {BasisKind::Identity, p}; }
  static BasisSpec feature_cross(Eigen::Index p) { return {BasisKind::FeatureCross, p}; }

  Eigen::Index output_dim() const {
    if (kind == BasisKind::Identity) return input_dim;
    const Eigen::Index m = input_dim - 1;
    return 1 + m + m * (m + 1) / 2;
  }

  /// Same kind, different input dimension.
  BasisSpec with_input_dim(Eigen::Index p) const { return {kind, p}; }

  friend bool operator==(const BasisSpec&, const BasisSpec&) = default;
};

inline std::string to_string(BasisKind kind) {
  return kind == BasisKind::Identity ? "linear" : "quad";
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> expand(
    const BasisSpec& basis, const Eigen::MatrixBase<Derived>& Z) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (Z.cols() != basis.input_dim) {
    throw DimensionError("expand: input has " + std::to_string(Z.cols()) +
                         " columns, basis expects " + std::to_string(basis.input_dim));
  }
  if (basis.kind == BasisKind::Identity) return Mat(Z);

  const Eigen::Index m = basis.input_dim - 1;
  Mat phi(Z.rows(), basis.output_dim());
  phi.col(0).setOnes();
  phi.middleCols(1, m) = Z.rightCols(m);
  Eigen::Index c = 1 + m;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j, ++c) {
      phi.col(c) = Z.col(1 + i).cwiseProduct(Z.col(1 + j));
    }
  }
  return phi;
}

/// Pulls a cotangent on the expanded features back onto the inputs:
/// returns dZ (N x p) with dZ(r, c) = sum_d dPhi(r, d) * dphi_d/dz_c.
/// The derivative with respect to the constant column is reported as zero.
template <typename DerivedZ, typename DerivedG>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, Eigen::Dynamic> expand_backward(
    const BasisSpec& basis, const Eigen::MatrixBase<DerivedZ>& Z,
    const Eigen::MatrixBase<DerivedG>& dPhi) {
  using Scalar = typename DerivedZ::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (Z.cols() != basis.input_dim || dPhi.cols() != basis.output_dim() ||
      dPhi.rows() != Z.rows()) {
    throw DimensionError("expand_backward: shape mismatch");
  }
  const Eigen::Index m = basis.input_dim - 1;
  Mat dZ = Mat::Zero(Z.rows(), Z.cols());
  if (basis.kind == BasisKind::Identity) {
    dZ.rightCols(m) = dPhi.rightCols(m);
    return dZ;
  }
  dZ.rightCols(m) = dPhi.middleCols(1, m);
  Eigen::Index c = 1 + m;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i; j < m; ++j, ++c) {
      if (i == j) {
        dZ.col(1 + i) += Scalar(2) * dPhi.col(c).cwiseProduct(Z.col(1 + i));
      } else {
        dZ.col(1 + i) += dPhi.col(c).cwiseProduct(Z.col(1 + j));
        dZ.col(1 + j) += dPhi.col(c).cwiseProduct(Z.col(1 + i));
      }
    }
  }
  return dZ;
}

}  // namespace fairmi

#pragma once

// Small dense helpers shared by every module. All of them are written against
// Eigen::MatrixBase so they accept expressions as well as plain matrices.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace mpcc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Operators on a determinant basis are plain dense matrices.
using Operator = MatrixX<double>;
using State = VectorX<double>;

template <typename Derived>
typename Derived::RealScalar max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? typename Derived::RealScalar(0) : m.cwiseAbs().maxCoeff();
}

template <typename Derived>
typename Derived::RealScalar symmetry_defect(const Eigen::MatrixBase<Derived>& m) {
  return max_abs(m - m.transpose());
}

template <typename Derived>
typename Derived::RealScalar antisymmetry_defect(const Eigen::MatrixBase<Derived>& m) {
  return max_abs(m + m.transpose());
}

template <typename DerivedA, typename DerivedB>
auto commutator(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  MatrixX<Scalar> out = a * b;
  out.noalias() -= b * a;
  return out;
}

/// ||U^T U - 1||_max
template <typename Derived>
typename Derived::RealScalar orthogonality_defect(const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> g = u.adjoint() * u;
  g.diagonal().array() -= Scalar(1);
  return max_abs(g);
}

/// exp(scale * n) for a nilpotent n, summed exactly. The series stops at the
/// first vanishing power, or after max_order terms.
template <typename Derived>
MatrixX<typename Derived::Scalar> nilpotent_exp(const Eigen::MatrixBase<Derived>& n,
                                                typename Derived::Scalar scale, int max_order) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> result = MatrixX<Scalar>::Identity(n.rows(), n.cols());
  MatrixX<Scalar> term = result;
  for (int k = 1; k <= max_order; ++k) {
    term = (scale / Scalar(k)) * (term * n);
    if (term.isZero(0)) break;
    result += term;
  }
  return result;
}

/// exp(n) v for a nilpotent n, without forming the exponential.
template <typename DerivedM, typename DerivedV>
VectorX<typename DerivedM::Scalar> nilpotent_exp_apply(const Eigen::MatrixBase<DerivedM>& n,
                                                       const Eigen::MatrixBase<DerivedV>& v,
                                                       int max_order) {
  using Scalar = typename DerivedM::Scalar;
  VectorX<Scalar> result = v;
  VectorX<Scalar> term = v;
  for (int k = 1; k <= max_order; ++k) {
    term = (n * term) / Scalar(k);
    if (term.isZero(0)) break;
    result += term;
  }
  return result;
}

/// General dense exponential (Pade scaling and squaring).
template <typename Derived>
MatrixX<typename Derived::Scalar> dense_exp(const Eigen::MatrixBase<Derived>& a) {
  MatrixX<typename Derived::Scalar> plain = a;
  return plain.exp();
}

}  // namespace mpcc

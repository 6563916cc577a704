#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <limits>
#include <string>

#include "ssgan/error.hpp"

namespace ssgan {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Minimizes ||A W - B||^2 + lambda ||W||^2.
//
// lambda > 0 solves the normal equations by Cholesky, in whichever of the
// primal (d x d) or dual (n x n) form is smaller. lambda == 0 uses Cholesky
// on the Gram matrix when it is well conditioned and otherwise falls back to
// a complete orthogonal decomposition, which yields the minimum-norm
// least-squares solution.
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> ridge_solve(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b,
                                              typename DerivedA::Scalar lambda) {
  using Scalar = typename DerivedA::Scalar;
  const auto n = a.rows(), d = a.cols();
  if (n < 1 || d < 1) throw ContractError("ridge_solve: empty design matrix");
  if (b.rows() != n) {
    throw DimensionError("ridge_solve: A has " + std::to_string(n) +
                         " rows but B has " + std::to_string(b.rows()));
  }
  if (!(lambda >= 0)) throw ContractError("ridge_solve: lambda must be >= 0");
  if (!a.allFinite() || !b.allFinite() || !std::isfinite(lambda)) {
    throw NumericalError("ridge_solve: non-finite input");
  }

  if (lambda > 0) {
    if (d <= n) {
      Matrix<Scalar> gram = a.transpose() * a;
      gram.diagonal().array() += lambda;
      Eigen::LLT<Matrix<Scalar>> llt(gram);
      if (llt.info() == Eigen::Success) return llt.solve(a.transpose() * b);
    } else {
      Matrix<Scalar> gram = a * a.transpose();
      gram.diagonal().array() += lambda;
      Eigen::LLT<Matrix<Scalar>> llt(gram);
      if (llt.info() == Eigen::Success) return a.transpose() * llt.solve(b);
    }
    // Only reachable for lambda tiny relative to the data scale.
  } else if (d <= n) {
    const Matrix<Scalar> gram = a.transpose() * a;
    Eigen::LLT<Matrix<Scalar>> llt(gram);
    const Scalar tol = static_cast<Scalar>(d) * std::numeric_limits<Scalar>::epsilon() * 1e3;
    if (llt.info() == Eigen::Success && llt.rcond() > tol) {
      return llt.solve(a.transpose() * b);
    }
  }

  if (lambda > 0) {
    // Augmented system [A; sqrt(lambda) I] W = [B; 0].
    Matrix<Scalar> aug(n + d, d);
    aug << a, Matrix<Scalar>::Identity(d, d) * std::sqrt(lambda);
    Matrix<Scalar> rhs = Matrix<Scalar>::Zero(n + d, b.cols());
    rhs.topRows(n) = b;
    return aug.completeOrthogonalDecomposition().solve(rhs);
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix<Scalar>> cod(a);
  return cod.solve(b);
}

}  // namespace ssgan

#pragma once

#include "opclab/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace opclab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Reciprocal condition estimate below which an SPD solve is refused.
inline constexpr double kSingularRcond = 1e-12;

/// Symmetric square root factor L of a PSD matrix with L * L^T = M.
/// Eigenvalues below zero from round-off are clamped.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> psd_sqrt(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() != m.cols()) throw ContractViolation("psd_sqrt: matrix is not square");
  if (m.size() == 0) return Mat(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> eig(Mat(m.eval()));
  const auto roots = eig.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

/// True when `m` is symmetric (to `tol`) and has no eigenvalue below `-tol`.
template <typename Derived>
bool is_symmetric_psd(const Eigen::MatrixBase<Derived>& m, double tol = 1e-12) {
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  const Mat dense = m.eval();
  if (!dense.allFinite()) return false;
  const double scale = std::max(1.0, static_cast<double>(dense.cwiseAbs().maxCoeff()));
  if ((dense - dense.transpose()).cwiseAbs().maxCoeff() > tol * scale) return false;
  Eigen::SelfAdjointEigenSolver<Mat> eig(dense);
  return eig.eigenvalues().minCoeff() >= -tol * scale;
}

/// Solve `system * x = rhs` for a symmetric positive-definite system matrix.
/// Throws SingularSystemError when the Cholesky factorization fails or the
/// reciprocal condition estimate drops below kSingularRcond.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, DerivedB::ColsAtCompileTime> spd_solve(
    const Eigen::MatrixBase<DerivedA>& system, const Eigen::MatrixBase<DerivedB>& rhs,
    const std::string& context) {
  using Scalar = typename DerivedA::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (system.rows() != system.cols() || system.rows() != rhs.rows())
    throw ContractViolation(context + ": dimension mismatch in linear solve");
  Eigen::LLT<Mat> llt(Mat(system.eval()));
  if (llt.info() != Eigen::Success)
    throw SingularSystemError(context + ": system matrix is not positive definite");
  const double rcond = static_cast<double>(llt.rcond());
  if (!(rcond >= kSingularRcond))
    throw SingularSystemError(context + ": reciprocal condition estimate " +
                              std::to_string(rcond) + " below threshold");
  return llt.solve(rhs);
}

/// Largest singular value.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::JacobiSVD<Mat> svd(Mat(m.eval()));
  return static_cast<double>(svd.singularValues()(0));
}

}  // namespace opclab

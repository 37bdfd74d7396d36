#pragma once

#include "opclab/env.hpp"
#include "opclab/linalg.hpp"

#include <cmath>
#include <vector>

namespace opclab {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Stacked map from T inputs to the T+1 states of one episode started at
/// zero: s = F u + d. F has n_s (T+1) rows and n_a T columns.
template <typename Scalar>
struct LiftedSystem {
  DenseMatrix<Scalar> F;
  Eigen::Index n_s = 0;
  Eigen::Index n_a = 0;
  int T = 0;
};

/// Block (i, j) = A^{i-j-1} B for i > j, zero otherwise.
template <typename Scalar>
LiftedSystem<Scalar> build_lifted(const DenseMatrix<Scalar>& A, const DenseMatrix<Scalar>& B,
                                  int T) {
  if (T < 1) throw ContractViolation("build_lifted: T must be >= 1");
  if (A.rows() != A.cols() || B.rows() != A.rows())
    throw ContractViolation("build_lifted: inconsistent A/B dimensions");
  const Eigen::Index n = A.rows(), m = B.cols();
  LiftedSystem<Scalar> sys{DenseMatrix<Scalar>::Zero(n * (T + 1), m * T), n, m, T};
  // powers[k] = A^k B
  std::vector<DenseMatrix<Scalar>> powers{B};
  for (int k = 1; k < T; ++k) powers.push_back(A * powers.back());
  for (int i = 1; i <= T; ++i)
    for (int j = 0; j < i; ++j) sys.F.block(i * n, j * m, n, m) = powers[i - j - 1];
  return sys;
}

/// Time-varying dynamics s_{t+1} = A_t s_t + B_t u_t. Block (i, j) is
/// A_{i-1} ... A_{j+1} B_j; A_0 only matters through the initial state and is
/// not used here.
template <typename Scalar>
LiftedSystem<Scalar> build_lifted_timevarying(const std::vector<DenseMatrix<Scalar>>& A_t,
                                              const std::vector<DenseMatrix<Scalar>>& B_t) {
  if (A_t.empty() || A_t.size() != B_t.size())
    throw ContractViolation("build_lifted_timevarying: need equal, non-empty A_t and B_t lists");
  const int T = static_cast<int>(A_t.size());
  const Eigen::Index n = B_t.front().rows(), m = B_t.front().cols();
  for (int t = 0; t < T; ++t) {
    if (A_t[t].rows() != n || A_t[t].cols() != n || B_t[t].rows() != n || B_t[t].cols() != m)
      throw ContractViolation("build_lifted_timevarying: inconsistent dimensions at t=" +
                              std::to_string(t));
  }
  LiftedSystem<Scalar> sys{DenseMatrix<Scalar>::Zero(n * (T + 1), m * T), n, m, T};
  for (int j = 0; j < T; ++j) {
    DenseMatrix<Scalar> block = B_t[j];
    for (int i = j + 1; i <= T; ++i) {
      sys.F.block(i * n, j * m, n, m) = block;
      if (i < T) block = A_t[i] * block;
    }
  }
  return sys;
}

/// Concatenate equally sized vectors.
template <typename Scalar>
DenseVector<Scalar> stack(const std::vector<DenseVector<Scalar>>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  DenseVector<Scalar> out(total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.segment(offset, p.size()) = p;
    offset += p.size();
  }
  return out;
}

/// d = s - F u for stacked states and inputs.
template <typename Scalar>
DenseVector<Scalar> estimate_disturbance(const DenseVector<Scalar>& s, const DenseVector<Scalar>& u,
                                         const LiftedSystem<Scalar>& sys) {
  if (s.size() != sys.F.rows() || u.size() != sys.F.cols())
    throw ContractViolation("estimate_disturbance: stacked dimensions do not match F");
  return s - sys.F * u;
}

/// Stacks s_0..s_T and a_0..a_{T-1} of a full-length trajectory.
inline Vector estimate_disturbance(const Trajectory& traj, const LiftedSystem<double>& sys) {
  if (static_cast<int>(traj.size()) != sys.T)
    throw ContractViolation("estimate_disturbance: trajectory length differs from lifted horizon");
  std::vector<Vector> actions;
  for (const auto& tr : traj.transitions) actions.push_back(tr.action);
  return estimate_disturbance<double>(stack(traj.states()), stack(actions), sys);
}

/// sqrt(e^T M e).
template <typename Scalar>
Scalar weighted_norm(const DenseVector<Scalar>& e, const DenseMatrix<Scalar>& M) {
  using std::sqrt;
  const Scalar q = e.dot(M * e);
  return sqrt(q > Scalar(0) ? q : Scalar(0));
}

/// 1/2 ||e - F du||_M^2 + 1/2 ||du||_W^2.
template <typename Scalar>
Scalar ilc_objective(const DenseVector<Scalar>& e, const DenseVector<Scalar>& du,
                     const LiftedSystem<Scalar>& sys, const DenseMatrix<Scalar>& M,
                     const DenseMatrix<Scalar>& W) {
  const DenseVector<Scalar> r = e - sys.F * du;
  return Scalar(0.5) * r.dot(M * r) + Scalar(0.5) * du.dot(W * du);
}

/// u + (F^T M F + W)^{-1} F^T M e.
template <typename Scalar>
DenseVector<Scalar> noilc_update(const DenseVector<Scalar>& u, const DenseVector<Scalar>& e,
                                 const LiftedSystem<Scalar>& sys, const DenseMatrix<Scalar>& M,
                                 const DenseMatrix<Scalar>& W) {
  const auto& F = sys.F;
  if (u.size() != F.cols() || e.size() != F.rows() || M.rows() != F.rows() ||
      M.cols() != F.rows() || W.rows() != F.cols() || W.cols() != F.cols())
    throw ContractViolation("noilc_update: dimension mismatch");
  const DenseMatrix<Scalar> FtM = F.transpose() * M;
  const DenseMatrix<Scalar> system = FtM * F + W;
  return u + spd_solve(system, FtM * e, "noilc_update");
}

/// u + (F^T F + C)^{-1} F^T (ref - s), with s the stacked recorded states.
template <typename Scalar>
DenseVector<Scalar> mbrl_closed_form(const DenseVector<Scalar>& reference,
                                     const DenseVector<Scalar>& s, const DenseVector<Scalar>& u,
                                     const LiftedSystem<Scalar>& sys,
                                     const DenseMatrix<Scalar>& C_pi) {
  const auto& F = sys.F;
  if (reference.size() != F.rows() || s.size() != F.rows() || u.size() != F.cols() ||
      C_pi.rows() != F.cols() || C_pi.cols() != F.cols())
    throw ContractViolation("mbrl_closed_form: dimension mismatch");
  const DenseMatrix<Scalar> system = F.transpose() * F + C_pi;
  return u + spd_solve(system, F.transpose() * (reference - s), "mbrl_closed_form");
}

/// Repeated NO-ILC on a plant s = F_true u + d with a fixed disturbance.
/// The update uses `model`; entry j of the result is ||ref - s^{(j)}||_M,
/// starting with the error of u_0.
template <typename Scalar>
std::vector<Scalar> ilc_iterate(const LiftedSystem<Scalar>& plant, const DenseVector<Scalar>& d,
                                const DenseVector<Scalar>& reference,
                                const LiftedSystem<Scalar>& model, DenseVector<Scalar> u,
                                const DenseMatrix<Scalar>& M, const DenseMatrix<Scalar>& W,
                                int iterations) {
  if (iterations < 0) throw ContractViolation("ilc_iterate: negative iteration count");
  if (plant.F.rows() != model.F.rows() || plant.F.cols() != model.F.cols() ||
      d.size() != plant.F.rows() || reference.size() != plant.F.rows())
    throw ContractViolation("ilc_iterate: dimension mismatch");
  std::vector<Scalar> curve;
  DenseVector<Scalar> e = reference - (plant.F * u + d);
  curve.push_back(weighted_norm(e, M));
  for (int j = 0; j < iterations; ++j) {
    u = noilc_update(u, e, model, M, W);
    e = reference - (plant.F * u + d);
    curve.push_back(weighted_norm(e, M));
  }
  return curve;
}

}  // namespace opclab

#pragma once

#include "opclab/env.hpp"

#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace opclab {

/// Affine model s' = (A + dA) s + (B + dB) a + d with Gaussian noise.
///
/// dA and dB are injected errors for controlled-mismatch studies; empty
/// matrices mean no injection. noise_cov is the residual covariance of the
/// fit; it is used when sampling but never by model_mean.
struct LearnedLinearModel {
  Matrix A;
  Matrix B;
  Vector d;
  Matrix dA;
  Matrix dB;
  Matrix noise_cov;
  double residual_sum = 0.0;

  /// Model with the given matrices, zero bias and zero noise.
  static LearnedLinearModel exact(Matrix A, Matrix B);
  LearnedLinearModel with_injected_error(Matrix dA, Matrix dB) const;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index action_dim() const { return B.cols(); }
  /// A + dA and B + dB.
  Matrix effective_A() const;
  Matrix effective_B() const;
};

/// f_t(s, a) = A s + B a + d_t.
struct TimeOffsetModel {
  Matrix A;
  Matrix B;
  std::vector<Vector> offsets;
};

/// Bootstrap ensemble of linear models.
struct EnsembleModel {
  std::vector<LearnedLinearModel> members;
};

/// Trajectories grouped by iteration, oldest first.
class ReplayBuffer {
 public:
  void add(Trajectory traj);
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  std::size_t size() const { return trajectories_.size(); }
  bool empty() const { return trajectories_.empty(); }
  /// Frozen copy for readers.
  std::shared_ptr<const std::vector<Trajectory>> snapshot() const;
  /// All transitions of all trajectories.
  std::vector<Transition> transitions() const;

 private:
  std::vector<Trajectory> trajectories_;
};

using BufferSnapshot = std::shared_ptr<const std::vector<Trajectory>>;

/// Keep the trajectories with iteration > current_iteration - K.
ReplayBuffer buffer_retain(const ReplayBuffer& buffer, int current_iteration, int K);

/// Non-parametric model replaying recorded next states.
struct ReplayModel {
  BufferSnapshot reference;
};

/// Deterministic mean function used inside the OPC correction.
using MeanModel = std::variant<LearnedLinearModel, TimeOffsetModel>;

/// On-policy corrected model: recorded next state plus the inner model's
/// predicted change between the queried and the recorded state-action pair.
struct OpcModel {
  MeanModel inner;
  BufferSnapshot reference;
};

using TransitionModel =
    std::variant<ReplayModel, LearnedLinearModel, TimeOffsetModel, EnsembleModel, OpcModel>;

/// Ordinary least squares fit of s' = A s + B a + d over `data`, with an
/// optional ridge penalty on [A B d]. Throws SingularFitError naming the
/// first rank-deficient regressor column when ridge is zero.
LearnedLinearModel fit_least_squares(std::span<const Transition> data, double ridge = 0.0);

/// Bootstrap-resampled ensemble with `members` fits.
EnsembleModel fit_bootstrap_ensemble(std::span<const Transition> data, int members,
                                     RandomStream& rng, double ridge = 0.0);

/// d_t = s_{t+1} - (A s_t + B a_t) along `traj`.
TimeOffsetModel fit_time_offsets(const Trajectory& traj, const Matrix& A, const Matrix& B);

Vector model_mean(const LearnedLinearModel& model, const Vector& s, const Vector& a);
Vector model_mean(const TimeOffsetModel& model, const Vector& s, const Vector& a, int t);
/// Average of the member means.
Vector model_mean(const EnsembleModel& model, const Vector& s, const Vector& a);
Vector model_mean(const MeanModel& model, const Vector& s, const Vector& a, int t);

/// Recorded s_{t+1} of trajectory b. Throws OutOfDataError past the end.
Vector replay_step(const ReplayModel& model, int t, int b);

/// s_ref_{t+1} + f(s, a) - f(s_ref_t, a_ref_t). Throws OutOfDataError when
/// the reference transition (t, b) does not exist.
Vector opc_step(const OpcModel& model, const Vector& s, const Vector& a, int t, int b);

struct GeneralizedOpcSample {
  /// Fresh environment sample from the reference state-action pair.
  Vector reference_next;
  /// reference_next + f(s, a) - f(s_ref, a_ref).
  Vector next;
};

/// Generalized OPC transition: uses a fresh environment sample in place of
/// the recorded next state. Analysis only.
GeneralizedOpcSample generalized_opc_step(const LinearGaussianEnv& env, const MeanModel& f,
                                          const Vector& s, const Vector& a,
                                          const Vector& s_ref, const Vector& a_ref, int t,
                                          RandomStream& rng);

/// One OPC model per ensemble member, all sharing `reference`.
std::vector<OpcModel> opc_per_member(const EnsembleModel& ensemble, BufferSnapshot reference);

}  // namespace opclab

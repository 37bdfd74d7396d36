#include "opclab/models.hpp"

#include <string>

namespace opclab {

namespace {

const Transition& reference_transition(const BufferSnapshot& reference, int t, int b) {
  if (!reference) throw OutOfDataError("reference buffer is not set");
  if (b < 0 || static_cast<std::size_t>(b) >= reference->size())
    throw OutOfDataError("reference trajectory " + std::to_string(b) + " does not exist");
  const auto& traj = (*reference)[static_cast<std::size_t>(b)];
  if (t < 0 || static_cast<std::size_t>(t) >= traj.size())
    throw OutOfDataError("reference trajectory " + std::to_string(b) + " has no transition at t=" +
                         std::to_string(t));
  return traj.transitions[static_cast<std::size_t>(t)];
}

}  // namespace

LearnedLinearModel LearnedLinearModel::exact(Matrix A, Matrix B) {
  LearnedLinearModel m;
  const auto n = A.rows();
  m.A = std::move(A);
  m.B = std::move(B);
  m.d = Vector::Zero(n);
  m.noise_cov = Matrix::Zero(n, n);
  return m;
}

LearnedLinearModel LearnedLinearModel::with_injected_error(Matrix dA_, Matrix dB_) const {
  if (dA_.size() != 0 && (dA_.rows() != A.rows() || dA_.cols() != A.cols()))
    throw ContractViolation("injected dA shape mismatch");
  if (dB_.size() != 0 && (dB_.rows() != B.rows() || dB_.cols() != B.cols()))
    throw ContractViolation("injected dB shape mismatch");
  LearnedLinearModel out = *this;
  out.dA = std::move(dA_);
  out.dB = std::move(dB_);
  return out;
}

Matrix LearnedLinearModel::effective_A() const { return dA.size() == 0 ? A : Matrix(A + dA); }
Matrix LearnedLinearModel::effective_B() const { return dB.size() == 0 ? B : Matrix(B + dB); }

void ReplayBuffer::add(Trajectory traj) {
  if (traj.empty()) throw ContractViolation("replay buffer: trajectory is empty");
  validate_trajectory(traj);
  trajectories_.push_back(std::move(traj));
}

std::shared_ptr<const std::vector<Trajectory>> ReplayBuffer::snapshot() const {
  return std::make_shared<const std::vector<Trajectory>>(trajectories_);
}

std::vector<Transition> ReplayBuffer::transitions() const {
  std::vector<Transition> out;
  for (const auto& traj : trajectories_)
    out.insert(out.end(), traj.transitions.begin(), traj.transitions.end());
  return out;
}

ReplayBuffer buffer_retain(const ReplayBuffer& buffer, int current_iteration, int K) {
  if (K < 1) throw ContractViolation("buffer_retain: K must be >= 1");
  ReplayBuffer out;
  for (const auto& traj : buffer.trajectories())
    if (traj.iteration > current_iteration - K) out.add(traj);
  return out;
}

LearnedLinearModel fit_least_squares(std::span<const Transition> data, double ridge) {
  if (data.empty()) throw ContractViolation("fit_least_squares: no data");
  if (ridge < 0.0) throw ContractViolation("fit_least_squares: ridge must be >= 0");
  const auto ns = data.front().state.size();
  const auto na = data.front().action.size();
  const auto p = ns + na + 1;
  const auto m = static_cast<Eigen::Index>(data.size());
  if (ridge == 0.0 && m < p)
    throw SingularFitError("fit_least_squares: " + std::to_string(m) + " transitions for " +
                               std::to_string(p) + " regressors",
                           static_cast<int>(m));

  Matrix X(m, p);
  Matrix Y(m, ns);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& tr = data[static_cast<std::size_t>(i)];
    if (tr.state.size() != ns || tr.action.size() != na || tr.next_state.size() != ns)
      throw ContractViolation("fit_least_squares: inconsistent transition dimensions");
    X.row(i) << tr.state.transpose(), tr.action.transpose(), 1.0;
    Y.row(i) = tr.next_state.transpose();
  }

  Matrix W;  // p x ns, rows ordered [A^T; B^T; d^T]
  if (ridge == 0.0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      // The first pivot past the rank names a column in the span of the others.
      const int deficient = static_cast<int>(qr.colsPermutation().indices()(qr.rank()));
      const std::string name = deficient < ns ? "state[" + std::to_string(deficient) + "]"
                               : deficient < ns + na
                                   ? "action[" + std::to_string(deficient - ns) + "]"
                                   : std::string("bias");
      throw SingularFitError("fit_least_squares: regressor matrix has rank " +
                                 std::to_string(qr.rank()) + " < " + std::to_string(p) +
                                 "; deficient dimension " + name,
                             deficient);
    }
    W = qr.solve(Y);
  } else {
    const Matrix gram = X.transpose() * X + ridge * Matrix::Identity(p, p);
    W = spd_solve(gram, X.transpose() * Y, "fit_least_squares");
  }

  LearnedLinearModel model;
  model.A = W.topRows(ns).transpose();
  model.B = W.middleRows(ns, na).transpose();
  model.d = W.bottomRows(1).transpose();
  const Matrix residual = Y - X * W;
  model.residual_sum = residual.squaredNorm();
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - p, 1));
  model.noise_cov = residual.transpose() * residual / dof;
  return model;
}

EnsembleModel fit_bootstrap_ensemble(std::span<const Transition> data, int members,
                                     RandomStream& rng, double ridge) {
  if (members < 1) throw ContractViolation("fit_bootstrap_ensemble: need at least one member");
  EnsembleModel ensemble;
  std::vector<Transition> sample(data.size());
  for (int e = 0; e < members; ++e) {
    for (auto& tr : sample) tr = data[rng.uniform_index(data.size())];
    ensemble.members.push_back(fit_least_squares(sample, ridge));
  }
  return ensemble;
}

TimeOffsetModel fit_time_offsets(const Trajectory& traj, const Matrix& A, const Matrix& B) {
  TimeOffsetModel model{A, B, {}};
  model.offsets.reserve(traj.size());
  for (const auto& tr : traj.transitions) {
    if (tr.state.size() != A.cols() || tr.action.size() != B.cols())
      throw ContractViolation("fit_time_offsets: dimension mismatch");
    model.offsets.push_back(tr.next_state - (A * tr.state + B * tr.action));
  }
  return model;
}

Vector model_mean(const LearnedLinearModel& model, const Vector& s, const Vector& a) {
  if (s.size() != model.A.cols() || a.size() != model.B.cols())
    throw ContractViolation("model_mean: dimension mismatch");
  Vector out = model.A * s + model.B * a + model.d;
  if (model.dA.size() != 0) out += model.dA * s;
  if (model.dB.size() != 0) out += model.dB * a;
  return out;
}

Vector model_mean(const TimeOffsetModel& model, const Vector& s, const Vector& a, int t) {
  if (t < 0 || static_cast<std::size_t>(t) >= model.offsets.size())
    throw OutOfDataError("time offset model has no offset for t=" + std::to_string(t));
  if (s.size() != model.A.cols() || a.size() != model.B.cols())
    throw ContractViolation("model_mean: dimension mismatch");
  return model.A * s + model.B * a + model.offsets[static_cast<std::size_t>(t)];
}

Vector model_mean(const EnsembleModel& model, const Vector& s, const Vector& a) {
  if (model.members.empty()) throw ContractViolation("model_mean: empty ensemble");
  Vector sum = Vector::Zero(model.members.front().state_dim());
  for (const auto& member : model.members) sum += model_mean(member, s, a);
  return sum / static_cast<double>(model.members.size());
}

Vector model_mean(const MeanModel& model, const Vector& s, const Vector& a, int t) {
  return std::visit(
      [&](const auto& m) -> Vector {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TimeOffsetModel>)
          return model_mean(m, s, a, t);
        else
          return model_mean(m, s, a);
      },
      model);
}

Vector replay_step(const ReplayModel& model, int t, int b) {
  return reference_transition(model.reference, t, b).next_state;
}

Vector opc_step(const OpcModel& model, const Vector& s, const Vector& a, int t, int b) {
  const Transition& ref = reference_transition(model.reference, t, b);
  // difference first: it is exactly zero when (s, a) is the recorded pair
  const Vector delta = model_mean(model.inner, s, a, t) - model_mean(model.inner, ref.state, ref.action, t);
  return ref.next_state + delta;
}

GeneralizedOpcSample generalized_opc_step(const LinearGaussianEnv& env, const MeanModel& f,
                                          const Vector& s, const Vector& a,
                                          const Vector& s_ref, const Vector& a_ref, int t,
                                          RandomStream& rng) {
  GeneralizedOpcSample out;
  out.reference_next = env_step(env, s_ref, a_ref, rng);
  const Vector delta = model_mean(f, s, a, t) - model_mean(f, s_ref, a_ref, t);
  out.next = out.reference_next + delta;
  return out;
}

std::vector<OpcModel> opc_per_member(const EnsembleModel& ensemble, BufferSnapshot reference) {
  if (ensemble.members.empty()) throw ContractViolation("opc_per_member: empty ensemble");
  std::vector<OpcModel> out;
  out.reserve(ensemble.members.size());
  for (const auto& member : ensemble.members) out.push_back(OpcModel{member, reference});
  return out;
}

}  // namespace opclab

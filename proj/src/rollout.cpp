#include "opclab/rollout.hpp"

#include <algorithm>
#include <limits>

namespace opclab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Vector sample_learned(const LearnedLinearModel& m, const Vector& s, const Vector& a,
                      RandomStream& rng) {
  Vector next = model_mean(m, s, a);
  if (m.noise_cov.size() != 0 && !m.noise_cov.isZero(0.0))
    next += psd_sqrt(m.noise_cov) * rng.normal_vector(next.size());
  return next;
}

const Trajectory* reference_trajectory(const BufferSnapshot& reference, int b) {
  if (!reference || b < 0 || static_cast<std::size_t>(b) >= reference->size()) return nullptr;
  return &(*reference)[static_cast<std::size_t>(b)];
}

/// Jacobians of the mean dynamics with respect to state and action.
std::pair<Matrix, Matrix> mean_jacobians(const TransitionModel& model, Eigen::Index ns,
                                         Eigen::Index na) {
  return std::visit(
      Overloaded{
          [&](const ReplayModel&) {
            return std::pair<Matrix, Matrix>{Matrix::Zero(ns, ns), Matrix::Zero(ns, na)};
          },
          [](const LearnedLinearModel& m) {
            return std::pair<Matrix, Matrix>{m.effective_A(), m.effective_B()};
          },
          [](const TimeOffsetModel& m) { return std::pair<Matrix, Matrix>{m.A, m.B}; },
          [&](const EnsembleModel& m) {
            Matrix A = Matrix::Zero(ns, ns), B = Matrix::Zero(ns, na);
            for (const auto& member : m.members) {
              A += member.effective_A();
              B += member.effective_B();
            }
            const double e = static_cast<double>(m.members.size());
            return std::pair<Matrix, Matrix>{A / e, B / e};
          },
          [](const OpcModel& m) {
            return std::visit(
                Overloaded{[](const LearnedLinearModel& inner) {
                             return std::pair<Matrix, Matrix>{inner.effective_A(),
                                                              inner.effective_B()};
                           },
                           [](const TimeOffsetModel& inner) {
                             return std::pair<Matrix, Matrix>{inner.A, inner.B};
                           }},
                m.inner);
          }},
      model);
}

/// Deterministic mean step used by the surrogate.
std::optional<Vector> mean_next(const TransitionModel& model, const Vector& s, const Vector& a,
                                int t, int b) {
  return std::visit(
      Overloaded{
          [&](const ReplayModel& m) -> std::optional<Vector> {
            const auto* traj = reference_trajectory(m.reference, b);
            if (!traj || t < 0 || static_cast<std::size_t>(t) >= traj->size()) return std::nullopt;
            return replay_step(m, t, b);
          },
          [&](const LearnedLinearModel& m) -> std::optional<Vector> { return model_mean(m, s, a); },
          [&](const TimeOffsetModel& m) -> std::optional<Vector> {
            if (t < 0 || static_cast<std::size_t>(t) >= m.offsets.size()) return std::nullopt;
            return model_mean(m, s, a, t);
          },
          [&](const EnsembleModel& m) -> std::optional<Vector> { return model_mean(m, s, a); },
          [&](const OpcModel& m) -> std::optional<Vector> {
            const auto* traj = reference_trajectory(m.reference, b);
            if (!traj || t < 0 || static_cast<std::size_t>(t) >= traj->size()) return std::nullopt;
            return opc_step(m, s, a, t, b);
          }},
      model);
}

}  // namespace

std::optional<Vector> model_next(const TransitionModel& model, const Vector& s, const Vector& a,
                                 int t, int b, RandomStream& rng) {
  return std::visit(
      Overloaded{
          [&](const LearnedLinearModel& m) -> std::optional<Vector> {
            return sample_learned(m, s, a, rng);
          },
          [&](const EnsembleModel& m) -> std::optional<Vector> {
            if (m.members.empty()) throw ContractViolation("model_next: empty ensemble");
            return sample_learned(m.members[rng.uniform_index(m.members.size())], s, a, rng);
          },
          [&](const auto&) { return mean_next(model, s, a, t, b); }},
      model);
}

Trajectory model_rollout(const TransitionModel& model, const Policy& policy, const Task& task,
                         const Vector& s0, int H, RandomStream& rng, int t0, int b) {
  if (H < 0) throw ContractViolation("model_rollout: negative horizon");
  if (!s0.allFinite()) throw ContractViolation("model_rollout: initial state is not finite");
  Trajectory traj;
  traj.index = b;
  Vector s = s0;
  for (int h = 0; h < H; ++h) {
    const int t = t0 + h;
    Vector a = act(policy, s, rng);
    auto next = model_next(model, s, a, t, b, rng);
    if (!next) break;
    Transition tr{t, s, std::move(a), std::move(*next), task.reward(s, t), false};
    tr.terminal = task.is_terminal(tr.next_state);
    s = tr.next_state;
    const bool stop = tr.terminal;
    traj.transitions.push_back(std::move(tr));
    if (stop) break;
  }
  return traj;
}

std::vector<SimTransition> run_branch(const TransitionModel& model, const BufferSnapshot& reference,
                                      const Policy& policy, const Task& task, int H, int t0,
                                      int b, bool reference_termination, RandomStream& rng,
                                      int branch_id) {
  const Trajectory* ref = reference_trajectory(reference, b);
  if (!ref || t0 < 0 || static_cast<std::size_t>(t0) >= ref->size())
    throw OutOfDataError("run_branch: no reference state at t=" + std::to_string(t0) +
                         " in trajectory " + std::to_string(b));
  std::vector<SimTransition> out;
  Vector s = ref->transitions[static_cast<std::size_t>(t0)].state;
  for (int h = 0; h < H; ++h) {
    const int t = t0 + h;
    Vector a = act(policy, s, rng);
    auto next = model_next(model, s, a, t, b, rng);
    if (!next) break;
    SimTransition st;
    st.branch = branch_id;
    st.source_t = t0;
    st.source_b = b;
    st.step = h;
    st.reward = task.reward(s, t);
    st.state = s;
    st.action = std::move(a);
    st.next_state = std::move(*next);
    st.terminal = task.is_terminal(st.next_state);
    bool stop = st.terminal;
    if (reference_termination && static_cast<std::size_t>(t) < ref->size() &&
        ref->transitions[static_cast<std::size_t>(t)].terminal)
      stop = true;
    s = st.next_state;
    out.push_back(std::move(st));
    if (stop) break;
  }
  return out;
}

SimBuffer branched_rollouts(const TransitionModel& model, const BufferSnapshot& reference,
                            const Policy& policy, const Task& task,
                            const BranchedRolloutConfig& cfg, RandomStream& rng) {
  if (!reference || reference->empty())
    throw ContractViolation("branched_rollouts: reference buffer is empty");
  if (cfg.horizon < 1) throw ConfigError("horizon", "must be >= 1");
  if (cfg.budget < 1) throw ConfigError("budget", "must be >= 1");
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& traj : *reference) shortest = std::min(shortest, traj.size());
  if (static_cast<std::size_t>(cfg.horizon) > shortest)
    throw ConfigError("horizon", "H=" + std::to_string(cfg.horizon) +
                                     " exceeds the shortest reference trajectory (" +
                                     std::to_string(shortest) + ")");
  const bool ref_term =
      cfg.reference_termination.value_or(std::holds_alternative<OpcModel>(model));

  SimBuffer sim;
  const auto budget = static_cast<std::size_t>(cfg.budget);
  while (sim.transitions.size() < budget) {
    const auto b = static_cast<int>(rng.uniform_index(reference->size()));
    const auto len = static_cast<long>((*reference)[static_cast<std::size_t>(b)].size());
    const auto t0 = static_cast<int>(rng.uniform_int(0, len - cfg.horizon));
    RandomStream branch_rng = rng.derive(static_cast<std::uint64_t>(sim.branches));
    auto branch = run_branch(model, reference, policy, task, cfg.horizon, t0, b, ref_term,
                             branch_rng, sim.branches);
    if (branch.empty())
      throw Error("branched_rollouts: branch from t=" + std::to_string(t0) + ", b=" +
                  std::to_string(b) + " produced no transitions");
    ++sim.branches;
    std::move(branch.begin(), branch.end(), std::back_inserter(sim.transitions));
  }
  sim.pre_truncation_size = sim.transitions.size();
  sim.transitions.resize(budget);
  return sim;
}

std::vector<BranchStart> branch_starts(const SimBuffer& sim, const BufferSnapshot& reference,
                                       const Policy& policy, int H, RandomStream& rng) {
  std::vector<BranchStart> starts;
  for (const auto& st : sim.transitions) {
    if (st.step != 0) continue;
    BranchStart start;
    start.t = st.source_t;
    start.b = st.source_b;
    const Trajectory* ref = reference_trajectory(reference, st.source_b);
    start.state = ref ? ref->transitions[static_cast<std::size_t>(st.source_t)].state : st.state;
    start.action_noise.reserve(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) start.action_noise.push_back(rng.normal_vector(policy.action_dim()));
    starts.push_back(std::move(start));
  }
  return starts;
}

SurrogateReturn::SurrogateReturn(TransitionModel model, BufferSnapshot reference, Task task,
                                 Policy policy, int H, double gamma, Averaging averaging,
                                 std::vector<BranchStart> starts)
    : model_(std::move(model)),
      reference_(std::move(reference)),
      task_(std::move(task)),
      policy_(std::move(policy)),
      H_(H),
      gamma_(gamma),
      averaging_(averaging),
      starts_(std::move(starts)) {
  if (starts_.empty()) throw ContractViolation("SurrogateReturn: no branch starts");
  for (const auto& s : starts_)
    if (static_cast<int>(s.action_noise.size()) < H_)
      throw ContractViolation("SurrogateReturn: action noise shorter than the horizon");
}

double SurrogateReturn::branch(const BranchStart& start, const Matrix& theta, Matrix* grad) const {
  const Policy policy = policy_.with_theta(theta);
  const auto ns = policy.state_dim();
  const auto na = policy.action_dim();
  const auto [Js, Ja] = mean_jacobians(model_, ns, na);
  const Matrix closed_loop = Js + Ja * theta;

  // Column k of `sens` is d s / d theta(k), theta in column-major order.
  Matrix sens = Matrix::Zero(ns, na * ns);
  Vector grad_flat = Vector::Zero(na * ns);
  Vector s = start.state;
  double total = 0.0;
  double weight = 1.0;
  int count = 0;
  for (int h = 0; h < H_; ++h) {
    const int t = start.t + h;
    const Vector a = act_with_noise(policy, s, start.action_noise[static_cast<std::size_t>(h)]);
    auto next = mean_next(model_, s, a, t, start.b);
    if (!next) break;
    const double w = averaging_ == Averaging::Sum ? weight : 1.0;
    total += w * task_.reward(s, t);
    if (grad) {
      grad_flat += w * (sens.transpose() * task_.reward.gradient(s, t));
      Matrix next_sens = closed_loop * sens;
      for (Eigen::Index j = 0; j < ns; ++j)
        for (Eigen::Index i = 0; i < na; ++i) next_sens.col(i + j * na) += Ja.col(i) * s(j);
      sens = std::move(next_sens);
    }
    ++count;
    weight *= gamma_;
    s = std::move(*next);
    if (task_.is_terminal(s)) break;
  }
  if (averaging_ == Averaging::Mean && count > 0) {
    total /= count;
    grad_flat /= count;
  }
  if (grad) *grad = Eigen::Map<const Matrix>(grad_flat.data(), na, ns);
  return total;
}

double SurrogateReturn::value(const Matrix& theta) const {
  double sum = 0.0;
  for (const auto& start : starts_) sum += branch(start, theta, nullptr);
  return sum / static_cast<double>(starts_.size());
}

Matrix SurrogateReturn::gradient(const Matrix& theta) const {
  Matrix sum = Matrix::Zero(theta.rows(), theta.cols());
  Matrix g;
  for (const auto& start : starts_) {
    branch(start, theta, &g);
    sum += g;
  }
  return sum / static_cast<double>(starts_.size());
}

namespace {

bool diverged(const std::vector<Trajectory>& rollouts, double guard) {
  for (const auto& traj : rollouts)
    for (const auto& s : traj.states())
      if (!s.allFinite() || s.norm() > guard) return true;
  return false;
}

}  // namespace

std::vector<MbrlRecord> mbrl_loop(const LinearGaussianEnv& env, const MbrlConfig& cfg,
                                  const Policy& policy0, RandomStream& rng, Policy* final_policy) {
  if (cfg.iterations < 0) throw ConfigError("iterations", "must be >= 0");
  if (cfg.rollouts_per_iteration < 1) throw ConfigError("rollouts_per_iteration", "must be >= 1");
  if (cfg.retain < 1) throw ConfigError("retain", "must be >= 1");

  std::vector<MbrlRecord> curve;
  ReplayBuffer buffer;
  Policy policy = policy0;
  std::optional<Policy> previous;
  SignStepImprover sign_improver(cfg.settings.step_size, cfg.settings.trust_region);

  for (int n = 1; n <= cfg.iterations; ++n) {
    MbrlRecord rec;
    rec.iteration = n;
    rec.theta = policy.theta();

    std::vector<Trajectory> rollouts;
    double true_return = 0.0;
    for (int b = 0; b < cfg.rollouts_per_iteration; ++b) {
      Trajectory traj = rollout_env(env, policy, rng);
      traj.iteration = n;
      traj.index = b;
      true_return += discounted_return(traj, env.gamma(), cfg.averaging);
      rollouts.push_back(std::move(traj));
    }
    rec.true_return = true_return / cfg.rollouts_per_iteration;

    if (diverged(rollouts, cfg.divergence_guard)) {
      rec.flagged = true;
      curve.push_back(std::move(rec));
      if (previous) policy = *previous;
      continue;
    }
    for (auto& traj : rollouts) buffer.add(std::move(traj));
    buffer = buffer_retain(buffer, n, cfg.retain);

    LearnedLinearModel learned;
    if (cfg.source == ModelSource::Fixed) {
      learned = cfg.fixed_model;
    } else {
      const auto data = buffer.transitions();
      learned = fit_least_squares(data, cfg.ridge);
    }
    if (cfg.dA.size() != 0 || cfg.dB.size() != 0)
      learned = learned.with_injected_error(cfg.dA, cfg.dB);

    const BufferSnapshot snapshot = buffer.snapshot();
    TransitionModel model;
    switch (cfg.kind) {
      case ModelKind::Replay: model = ReplayModel{snapshot}; break;
      case ModelKind::Learned: model = learned; break;
      case ModelKind::Opc: model = OpcModel{learned, snapshot}; break;
    }

    std::size_t shortest = std::numeric_limits<std::size_t>::max();
    for (const auto& traj : *snapshot) shortest = std::min(shortest, traj.size());
    const int H = std::min<int>(cfg.horizon, static_cast<int>(shortest));
    RandomStream sim_rng = rng.derive(rng.next_u64());
    const SimBuffer sim = branched_rollouts(model, snapshot, policy, env.task(),
                                            BranchedRolloutConfig{H, cfg.budget, {}}, sim_rng);
    rec.sim_transitions = sim.size();

    RandomStream noise_rng = rng.derive(rng.next_u64());
    SurrogateReturn surrogate(model, snapshot, env.task(), policy, H, env.gamma(), cfg.averaging,
                              branch_starts(sim, snapshot, policy, H, noise_rng));
    rec.model_return = surrogate.value(policy.theta());

    previous = policy;
    if (cfg.improver == ImproverKind::SignStep) {
      policy = sign_improver.step(policy, surrogate.gradient(policy.theta()));
    } else {
      policy = improve_policy(
          policy, [&](const Matrix& theta) { return surrogate.gradient(theta); }, cfg.settings);
    }
    curve.push_back(std::move(rec));
  }
  if (final_policy) *final_policy = policy;
  return curve;
}

}  // namespace opclab

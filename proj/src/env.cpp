#include "opclab/env.hpp"

#include <cmath>
#include <string>

namespace opclab {

RewardSpec RewardSpec::bell(double sigma_r) {
  if (!(sigma_r > 0.0)) throw ContractViolation("bell reward: sigma_r must be positive");
  RewardSpec r;
  r.kind = RewardKind::ExponentialBell;
  r.sigma_r = sigma_r;
  return r;
}

RewardSpec RewardSpec::tracking(std::vector<Vector> reference) {
  RewardSpec r;
  r.kind = RewardKind::QuadraticTracking;
  r.reference = std::move(reference);
  return r;
}

RewardSpec RewardSpec::negative_norm() {
  RewardSpec r;
  r.kind = RewardKind::NegativeStateNorm;
  return r;
}

Vector RewardSpec::reference_at(int t, Eigen::Index n) const {
  if (reference.empty()) return Vector::Zero(n);
  const auto& ref = reference[std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)),
                                                    reference.size() - 1)];
  if (ref.size() != n) throw ContractViolation("tracking reward: reference dimension mismatch");
  return ref;
}

double RewardSpec::operator()(const Vector& s, int t) const {
  switch (kind) {
    case RewardKind::ExponentialBell:
      return std::exp(-s.squaredNorm() / (sigma_r * sigma_r));
    case RewardKind::QuadraticTracking:
      return -0.5 * (reference_at(t, s.size()) - s).squaredNorm();
    case RewardKind::NegativeStateNorm:
      return -s.norm();
  }
  return 0.0;
}

Vector RewardSpec::gradient(const Vector& s, int t) const {
  switch (kind) {
    case RewardKind::ExponentialBell:
      return (-2.0 / (sigma_r * sigma_r) * (*this)(s, t)) * s;
    case RewardKind::QuadraticTracking:
      return reference_at(t, s.size()) - s;
    case RewardKind::NegativeStateNorm: {
      const double n = s.norm();
      return n > 0.0 ? Vector(-s / n) : Vector(Vector::Zero(s.size()));
    }
  }
  return Vector::Zero(s.size());
}

bool StateBox::contains(const Vector& s) const {
  if (s.size() != lower.size() || s.size() != upper.size())
    throw ContractViolation("state box: dimension mismatch");
  return (s.array() >= lower.array()).all() && (s.array() <= upper.array()).all();
}

LinearGaussianEnv::LinearGaussianEnv(Matrix A, Matrix B, Matrix noise_cov, Vector init_mean,
                                     Matrix init_cov, int horizon, double gamma, Task task)
    : A_(std::move(A)),
      B_(std::move(B)),
      noise_cov_(std::move(noise_cov)),
      init_mean_(std::move(init_mean)),
      init_cov_(std::move(init_cov)),
      horizon_(horizon),
      gamma_(gamma),
      task_(std::move(task)) {
  const auto n = A_.rows();
  if (A_.cols() != n || n == 0) throw ContractViolation("env: A must be square and non-empty");
  if (B_.rows() != n) throw ContractViolation("env: B must have n_s rows");
  if (noise_cov_.rows() != n || noise_cov_.cols() != n)
    throw ContractViolation("env: noise_cov must be n_s x n_s");
  if (init_mean_.size() != n) throw ContractViolation("env: initial state dimension mismatch");
  if (init_cov_.size() == 0) init_cov_ = Matrix::Zero(n, n);
  if (init_cov_.rows() != n || init_cov_.cols() != n)
    throw ContractViolation("env: init_cov must be n_s x n_s");
  if (!A_.allFinite() || !B_.allFinite() || !init_mean_.allFinite())
    throw ContractViolation("env: non-finite matrix entries");
  if (!is_symmetric_psd(noise_cov_)) throw ContractViolation("env: noise_cov must be symmetric PSD");
  if (!is_symmetric_psd(init_cov_)) throw ContractViolation("env: init_cov must be symmetric PSD");
  if (horizon_ < 1) throw ContractViolation("env: horizon must be >= 1");
  if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) throw ContractViolation("env: gamma must lie in [0, 1]");
  noise_factor_ = psd_sqrt(noise_cov_);
  init_factor_ = psd_sqrt(init_cov_);
  noise_is_zero_ = noise_cov_.isZero(0.0);
  init_is_fixed_ = init_cov_.isZero(0.0);
}

Vector LinearGaussianEnv::mean_next(const Vector& s, const Vector& a) const {
  if (s.size() != state_dim())
    throw ContractViolation("env_step: state has dimension " + std::to_string(s.size()) +
                            ", expected " + std::to_string(state_dim()));
  if (a.size() != action_dim())
    throw ContractViolation("env_step: action has dimension " + std::to_string(a.size()) +
                            ", expected " + std::to_string(action_dim()));
  return A_ * s + B_ * a;
}

Vector LinearGaussianEnv::sample_initial_state(RandomStream& rng) const {
  if (init_is_fixed_) return init_mean_;
  return init_mean_ + init_factor_ * rng.normal_vector(state_dim());
}

LinearGaussianEnv LinearGaussianEnv::with_horizon(int horizon) const {
  return LinearGaussianEnv(A_, B_, noise_cov_, init_mean_, init_cov_, horizon, gamma_, task_);
}

LinearGaussianEnv scalar_env(double A, double B, double s0, double sigma_r, int horizon,
                             double gamma) {
  return LinearGaussianEnv(Matrix::Constant(1, 1, A), Matrix::Constant(1, 1, B),
                           Matrix::Zero(1, 1), Vector::Constant(1, s0), Matrix::Zero(1, 1),
                           horizon, gamma, Task{RewardSpec::bell(sigma_r), std::nullopt});
}

LinearGaussianEnv double_integrator(double dt, double velocity_noise_var, int horizon,
                                    double gamma) {
  Matrix A(2, 2);
  A << 1.0, dt, 0.0, 1.0;
  Matrix B(2, 1);
  B << 0.0, dt;
  Matrix noise = Matrix::Zero(2, 2);
  noise(1, 1) = velocity_noise_var;
  Vector s0(2);
  s0 << 1.0, 0.0;
  return LinearGaussianEnv(A, B, noise, s0, Matrix::Zero(2, 2), horizon, gamma,
                           Task{RewardSpec::tracking(), std::nullopt});
}

std::vector<Vector> Trajectory::states() const {
  std::vector<Vector> out;
  if (transitions.empty()) return out;
  out.reserve(transitions.size() + 1);
  for (const auto& tr : transitions) out.push_back(tr.state);
  out.push_back(transitions.back().next_state);
  return out;
}

std::vector<double> Trajectory::rewards() const {
  std::vector<double> out;
  out.reserve(transitions.size());
  for (const auto& tr : transitions) out.push_back(tr.reward);
  return out;
}

void validate_trajectory(const Trajectory& traj) {
  for (std::size_t i = 0; i < traj.transitions.size(); ++i) {
    const auto& tr = traj.transitions[i];
    if (tr.t != static_cast<int>(i))
      throw ContractViolation("trajectory: time index " + std::to_string(tr.t) + " at position " +
                              std::to_string(i));
    if (tr.terminal && i + 1 != traj.transitions.size())
      throw ContractViolation("trajectory: terminal transition before the end");
    if (i > 0 && traj.transitions[i - 1].next_state != tr.state)
      throw ContractViolation("trajectory: states not chained at t=" + std::to_string(i));
  }
}

Vector env_step(const LinearGaussianEnv& env, const Vector& s, const Vector& a,
                RandomStream& rng) {
  Vector next = env.mean_next(s, a);
  if (!env.deterministic()) next += env.noise_factor() * rng.normal_vector(env.state_dim());
  return next;
}

Trajectory rollout_env(const LinearGaussianEnv& env, const Policy& policy, RandomStream& rng) {
  if (policy.state_dim() != env.state_dim() || policy.action_dim() != env.action_dim())
    throw ContractViolation("rollout_env: policy dimensions do not match the environment");
  RandomStream child = rng.derive(rng.next_u64());
  RandomStream env_rng = child.derive(0);
  RandomStream act_rng = child.derive(1);
  Trajectory traj;
  traj.transitions.reserve(static_cast<std::size_t>(env.horizon()));
  Vector s = env.sample_initial_state(env_rng);
  for (int t = 0; t < env.horizon(); ++t) {
    Transition tr;
    tr.t = t;
    tr.state = s;
    tr.action = act(policy, s, act_rng);
    tr.next_state = env_step(env, s, tr.action, env_rng);
    tr.reward = env.task().reward(s, t);
    tr.terminal = env.task().is_terminal(tr.next_state);
    s = tr.next_state;
    const bool stop = tr.terminal;
    traj.transitions.push_back(std::move(tr));
    if (stop) break;
  }
  return traj;
}

double discounted_return(std::span<const double> rewards, double gamma, Averaging averaging) {
  if (rewards.empty()) throw ContractViolation("discounted_return: empty trajectory");
  double total = 0.0;
  if (averaging == Averaging::Mean) {
    for (double r : rewards) total += r;
    return total / static_cast<double>(rewards.size());
  }
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

double discounted_return(const Trajectory& traj, double gamma, Averaging averaging) {
  const auto rewards = traj.rewards();
  return discounted_return(std::span<const double>(rewards), gamma, averaging);
}

bool closed_loop_stable(double A, double dA, double B, double dB, double theta, double margin) {
  return std::abs(A + dA + (B + dB) * theta) <= 1.0 - margin;
}

}  // namespace opclab

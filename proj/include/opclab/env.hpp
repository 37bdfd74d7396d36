#pragma once

#include "opclab/linalg.hpp"
#include "opclab/policy.hpp"
#include "opclab/random.hpp"

#include <optional>
#include <span>
#include <vector>

namespace opclab {

using StateVec = Vector;
using ActionVec = Vector;

enum class RewardKind { ExponentialBell, QuadraticTracking, NegativeStateNorm };

/// State-dependent reward r(s_t, t).
///
///  - ExponentialBell:   exp(-||s||^2 / sigma_r^2)
///  - QuadraticTracking: -1/2 ||ref_t - s||^2 (zero reference when empty;
///                       the last entry is reused past the end)
///  - NegativeStateNorm: -||s||
struct RewardSpec {
  RewardKind kind = RewardKind::ExponentialBell;
  double sigma_r = 0.05;
  std::vector<Vector> reference;

  static RewardSpec bell(double sigma_r);
  static RewardSpec tracking(std::vector<Vector> reference = {});
  static RewardSpec negative_norm();

  double operator()(const Vector& s, int t) const;
  /// Gradient with respect to s (zero at the kink of the norm reward).
  Vector gradient(const Vector& s, int t) const;

 private:
  Vector reference_at(int t, Eigen::Index n) const;
};

/// Axis-aligned state box. A state outside it is terminal.
struct StateBox {
  Vector lower;
  Vector upper;
  bool contains(const Vector& s) const;
};

/// Everything a rollout needs besides the dynamics.
struct Task {
  RewardSpec reward;
  std::optional<StateBox> terminal_box;
  bool is_terminal(const Vector& s) const {
    return terminal_box.has_value() && !terminal_box->contains(s);
  }
};

/// s' = A s + B a + w, w ~ N(0, noise_cov); s_0 ~ N(init_mean, init_cov).
class LinearGaussianEnv {
 public:
  LinearGaussianEnv(Matrix A, Matrix B, Matrix noise_cov, Vector init_mean, Matrix init_cov,
                    int horizon, double gamma, Task task);

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& noise_cov() const { return noise_cov_; }
  const Matrix& noise_factor() const { return noise_factor_; }
  const Vector& init_mean() const { return init_mean_; }
  const Matrix& init_cov() const { return init_cov_; }
  int horizon() const { return horizon_; }
  double gamma() const { return gamma_; }
  const Task& task() const { return task_; }
  Eigen::Index state_dim() const { return A_.rows(); }
  Eigen::Index action_dim() const { return B_.cols(); }
  bool deterministic() const { return noise_is_zero_; }

  Vector mean_next(const Vector& s, const Vector& a) const;
  Vector sample_initial_state(RandomStream& rng) const;
  /// Returns a copy with a different horizon.
  LinearGaussianEnv with_horizon(int horizon) const;

 private:
  Matrix A_, B_, noise_cov_, noise_factor_;
  Vector init_mean_;
  Matrix init_cov_, init_factor_;
  int horizon_;
  double gamma_;
  Task task_;
  bool noise_is_zero_ = true;
  bool init_is_fixed_ = true;
};

/// Scalar deterministic system with a bell reward: A = 1, B = 1, s0 = 1,
/// sigma_r = 0.05, T = 60 by default.
LinearGaussianEnv scalar_env(double A = 1.0, double B = 1.0, double s0 = 1.0,
                             double sigma_r = 0.05, int horizon = 60, double gamma = 1.0);

/// Stochastic double integrator, s = [position, velocity]:
/// A = [[1, dt], [0, 1]], B = [0, dt]^T, noise diag(0, velocity_noise_var),
/// s0 = [1, 0], quadratic reward tracking zero.
LinearGaussianEnv double_integrator(double dt = 0.1, double velocity_noise_var = 0.01,
                                    int horizon = 30, double gamma = 1.0);

struct Transition {
  int t = 0;
  Vector state;
  Vector action;
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

struct Trajectory {
  std::vector<Transition> transitions;
  int iteration = 0;
  int index = 0;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  /// s_0 ... s_len (one more entry than transitions).
  std::vector<Vector> states() const;
  std::vector<double> rewards() const;
};

/// Throws ContractViolation unless time indices run 0, 1, ... and only the
/// last transition may be terminal.
void validate_trajectory(const Trajectory& traj);

Vector env_step(const LinearGaussianEnv& env, const Vector& s, const Vector& a,
                RandomStream& rng);

/// Roll `policy` for env.horizon() steps, stopping after a terminal state.
/// Consumes one draw from `rng` and runs on two child streams: child 0 for
/// the initial state and transition noise, child 1 for action noise. Two
/// calls with equal streams therefore share environment noise even when the
/// policies differ.
Trajectory rollout_env(const LinearGaussianEnv& env, const Policy& policy, RandomStream& rng);

enum class Averaging { Sum, Mean };

/// sum_t gamma^t r_t, or (1/T) sum_t r_t for Mean. Throws on empty input.
double discounted_return(std::span<const double> rewards, double gamma, Averaging averaging);
double discounted_return(const Trajectory& traj, double gamma, Averaging averaging);

inline constexpr double kStabilityMargin = 1e-9;

/// |A + dA + (B + dB) theta| <= 1 - margin.
bool closed_loop_stable(double A, double dA, double B, double dB, double theta,
                        double margin = kStabilityMargin);

}  // namespace opclab

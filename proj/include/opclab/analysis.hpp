#pragma once

#include "opclab/rollout.hpp"

#include <optional>
#include <span>
#include <vector>

namespace opclab {

/// Terms of the policy-improvement decomposition
///   eta_{n+1} - eta_n >= (m_{n+1} - m_n) - |eta_{n+1} - m_{n+1}| - |eta_n - m_n|
/// where eta are true returns and m model returns.
struct ImprovementReport {
  double true_improvement = 0.0;
  double model_improvement = 0.0;
  double off_policy_error = 0.0;
  double on_policy_error = 0.0;
  double lower_bound = 0.0;
  /// Signed gaps eta - m under pi_{n+1} and pi_n; the absolute values are
  /// the two error terms.
  double off_policy_gap = 0.0;
  double on_policy_gap = 0.0;

  /// model_improvement + off_policy_gap - on_policy_gap.
  double reconstructed_true_improvement() const {
    return model_improvement + off_policy_gap - on_policy_gap;
  }
};

ImprovementReport improvement_report(double eta_n, double eta_next, double model_n,
                                     double model_next);

struct ReturnStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t count = 0;
  double standard_error() const;
};

ReturnStats return_stats(std::span<const double> returns);

/// Returns of model rollouts paired with `env_rollouts`, each with the same
/// length as its partner. Replay/OPC rollout i follows reference trajectory
/// i mod |reference| from its recorded initial state; other models start
/// at the initial state of env_rollouts[i].
std::vector<double> model_returns(const TransitionModel& model, const Policy& policy,
                                  const Task& task, const std::vector<Trajectory>& env_rollouts,
                                  double gamma, Averaging averaging, RandomStream& rng);

/// |mean env return - mean model return| with the env side taken from
/// `env_rollouts` (collected under `policy`).
double on_policy_error(const TransitionModel& model, const Policy& policy, const Task& task,
                       const std::vector<Trajectory>& env_rollouts, double gamma,
                       Averaging averaging, RandomStream& rng);

/// Collects `rollouts` fresh environment rollouts under `policy` first.
double on_policy_error(const LinearGaussianEnv& env, const TransitionModel& model,
                       const Policy& policy, int rollouts, Averaging averaging,
                       RandomStream& rng);

/// Off-policy error: the model (built from data under pi_n) is rolled with
/// pi_{n+1} and compared with environment rollouts under pi_{n+1}.
double off_policy_error(const LinearGaussianEnv& env, const TransitionModel& model,
                        const Policy& next_policy, int rollouts, Averaging averaging,
                        RandomStream& rng);

struct LipschitzProfile {
  double L_f = 0.0;
  double L_r = 0.0;
  double L_pi = 0.0;
  double sigma_pi_bar = 0.0;
  double gamma = 0.0;
  int T = 1;
  int n_a = 1;
};

/// sigma_bar / (1 - gamma) * n_a^{1/4} * C1 * C2^T * sqrt(T) with
/// C1 = sqrt(2 (1 + L_pi^2)) L_f L_r and C2 = sqrt(L_f^2 + L_pi^2).
double theorem1_rhs(const LipschitzProfile& profile);

/// min{H(H+1)/2, H/(1-gamma), gamma/(1-gamma)^2}.
double horizon_bound(int H, double gamma);

/// Signed arctan-angle distance between two scalar gradients, in [-1, 1].
/// Positive when the signs agree, negative when they disagree.
double signed_gradient_distance(double g1, double g2);

/// Exact W1 between two equal-weight empirical distributions on the line.
/// Unequal sizes are handled by resampling the larger set down to the size
/// of the smaller one with `rng` (required in that case).
double wasserstein1_empirical(std::span<const double> p, std::span<const double> q,
                              RandomStream* rng = nullptr);

/// Lipschitz constants of a linear model, a Gaussian-linear policy and the
/// reward. L_r for the bell reward is the global closed form
/// sqrt(2) e^{-1/2} / sigma_r; quadratic tracking needs `state_box`.
LipschitzProfile lipschitz_profile_linear(const LearnedLinearModel& model, const Policy& policy,
                                          const RewardSpec& reward,
                                          const std::optional<StateBox>& state_box, double gamma,
                                          int T);

/// Exact expected return of a linear-Gaussian env under a Gaussian-linear
/// policy with quadratic tracking reward (mean/covariance propagation).
double expected_return_linear_quadratic(const LinearGaussianEnv& env, const Policy& policy,
                                        Averaging averaging);

struct GeneralizedOpcGap {
  double env_return = 0.0;
  double opc_return = 0.0;
  double gap = 0.0;  // |env_return - opc_return|
};

/// Monte Carlo estimate of |eta - eta_opc| under the generalized OPC model.
/// Each OPC rollout is coupled to a reference environment rollout under the
/// same policy; the fresh sample from the reference pair advances both.
GeneralizedOpcGap generalized_opc_gap(const LinearGaussianEnv& env, const MeanModel& f,
                                      const Policy& policy, int rollouts, Averaging averaging,
                                      RandomStream& rng);

struct Lemma1Row {
  int B = 0;
  double mean_abs_error = 0.0;
  double tail_probability = 0.0;
  double estimator_variance = 0.0;
};

struct Lemma1Result {
  double true_return = 0.0;
  double epsilon = 0.0;
  std::vector<Lemma1Row> rows;
};

/// For each B: `trials` times collect B fresh reference trajectories under a
/// deterministic policy, roll the OPC model along each, and compare the
/// mean return with the true return. The true return is exact for
/// quadratic rewards and a 10^5-rollout Monte Carlo estimate otherwise.
/// epsilon defaults to 0.05 |eta|.
Lemma1Result lemma1_convergence_study(const LinearGaussianEnv& env, const MeanModel& model,
                                      const Policy& policy, const std::vector<int>& B_grid,
                                      int trials, Averaging averaging, RandomStream& rng,
                                      std::optional<double> epsilon = std::nullopt);

/// Spearman rank correlation (average ranks for ties).
double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace opclab

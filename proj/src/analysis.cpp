#include "opclab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace opclab {

ImprovementReport improvement_report(double eta_n, double eta_next, double model_n,
                                     double model_next) {
  ImprovementReport r;
  r.true_improvement = eta_next - eta_n;
  r.model_improvement = model_next - model_n;
  r.off_policy_gap = eta_next - model_next;
  r.on_policy_gap = eta_n - model_n;
  r.off_policy_error = std::abs(r.off_policy_gap);
  r.on_policy_error = std::abs(r.on_policy_gap);
  r.lower_bound = r.model_improvement - r.off_policy_error - r.on_policy_error;
  return r;
}

double ReturnStats::standard_error() const {
  return count > 0 ? std::sqrt(variance / static_cast<double>(count)) : 0.0;
}

ReturnStats return_stats(std::span<const double> returns) {
  ReturnStats st;
  st.count = returns.size();
  if (returns.empty()) return st;
  st.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(st.count);
  if (st.count > 1) {
    double ss = 0.0;
    for (double x : returns) ss += (x - st.mean) * (x - st.mean);
    st.variance = ss / static_cast<double>(st.count - 1);
  }
  return st;
}

namespace {

const BufferSnapshot* model_reference(const TransitionModel& model) {
  if (const auto* m = std::get_if<ReplayModel>(&model)) return &m->reference;
  if (const auto* m = std::get_if<OpcModel>(&model)) return &m->reference;
  return nullptr;
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

std::vector<double> model_returns(const TransitionModel& model, const Policy& policy,
                                  const Task& task, const std::vector<Trajectory>& env_rollouts,
                                  double gamma, Averaging averaging, RandomStream& rng) {
  const BufferSnapshot* reference = model_reference(model);
  if (reference && (!*reference || (*reference)->empty()))
    throw ContractViolation("model_returns: reference buffer is empty");
  std::vector<double> out;
  out.reserve(env_rollouts.size());
  for (std::size_t i = 0; i < env_rollouts.size(); ++i) {
    const auto& partner = env_rollouts[i];
    if (partner.empty()) throw ContractViolation("model_returns: empty environment rollout");
    int b = 0;
    Vector s0 = partner.transitions.front().state;
    if (reference) {
      b = static_cast<int>(i % (*reference)->size());
      s0 = (**reference)[static_cast<std::size_t>(b)].transitions.front().state;
    }
    const Trajectory traj = model_rollout(model, policy, task, s0,
                                          static_cast<int>(partner.size()), rng, 0, b);
    out.push_back(traj.empty() ? 0.0 : discounted_return(traj, gamma, averaging));
  }
  return out;
}

double on_policy_error(const TransitionModel& model, const Policy& policy, const Task& task,
                       const std::vector<Trajectory>& env_rollouts, double gamma,
                       Averaging averaging, RandomStream& rng) {
  if (env_rollouts.empty()) throw ContractViolation("on_policy_error: no environment rollouts");
  std::vector<double> env_returns;
  for (const auto& traj : env_rollouts) env_returns.push_back(discounted_return(traj, gamma, averaging));
  const auto returns = model_returns(model, policy, task, env_rollouts, gamma, averaging, rng);
  return std::abs(mean_of(env_returns) - mean_of(returns));
}

double on_policy_error(const LinearGaussianEnv& env, const TransitionModel& model,
                       const Policy& policy, int rollouts, Averaging averaging,
                       RandomStream& rng) {
  if (rollouts < 1) throw ContractViolation("on_policy_error: need at least one rollout");
  std::vector<Trajectory> env_rollouts;
  for (int i = 0; i < rollouts; ++i) env_rollouts.push_back(rollout_env(env, policy, rng));
  return on_policy_error(model, policy, env.task(), env_rollouts, env.gamma(), averaging, rng);
}

double off_policy_error(const LinearGaussianEnv& env, const TransitionModel& model,
                        const Policy& next_policy, int rollouts, Averaging averaging,
                        RandomStream& rng) {
  return on_policy_error(env, model, next_policy, rollouts, averaging, rng);
}

double theorem1_rhs(const LipschitzProfile& p) {
  if (!(p.gamma >= 0.0 && p.gamma < 1.0))
    throw ContractViolation("theorem1_rhs: gamma must lie in [0, 1)");
  if (p.L_f < 0 || p.L_r < 0 || p.L_pi < 0 || p.sigma_pi_bar < 0 || p.T < 1 || p.n_a < 1)
    throw ContractViolation("theorem1_rhs: constants must be nonnegative, T and n_a >= 1");
  const double c1 = std::sqrt(2.0 * (1.0 + p.L_pi * p.L_pi)) * p.L_f * p.L_r;
  const double c2 = std::sqrt(p.L_f * p.L_f + p.L_pi * p.L_pi);
  return p.sigma_pi_bar / (1.0 - p.gamma) * std::pow(static_cast<double>(p.n_a), 0.25) * c1 *
         std::pow(c2, p.T) * std::sqrt(static_cast<double>(p.T));
}

double horizon_bound(int H, double gamma) {
  if (H < 1) throw ContractViolation("horizon_bound: H must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ContractViolation("horizon_bound: gamma must lie in [0, 1)");
  const double h = H;
  return std::min({h * (h + 1.0) / 2.0, h / (1.0 - gamma),
                   gamma / ((1.0 - gamma) * (1.0 - gamma))});
}

double signed_gradient_distance(double g1, double g2) {
  const auto sign = [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); };
  const double delta = std::abs(std::atan(g1) - std::atan(g2));
  double s;
  if (g1 == 0.0)
    s = sign(g2);
  else if (g2 == 0.0)
    s = sign(g1);
  else
    s = sign(g1 * g2);
  return s * delta / std::numbers::pi;
}

double wasserstein1_empirical(std::span<const double> p, std::span<const double> q,
                              RandomStream* rng) {
  if (p.empty() || q.empty()) throw ContractViolation("wasserstein1_empirical: empty sample");
  std::vector<double> a(p.begin(), p.end());
  std::vector<double> b(q.begin(), q.end());
  if (a.size() != b.size()) {
    if (!rng)
      throw ContractViolation("wasserstein1_empirical: unequal sample counts need a random stream");
    auto& larger = a.size() > b.size() ? a : b;
    const std::size_t n = std::min(a.size(), b.size());
    std::vector<double> resampled(n);
    for (auto& x : resampled) x = larger[rng->uniform_index(larger.size())];
    larger = std::move(resampled);
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

LipschitzProfile lipschitz_profile_linear(const LearnedLinearModel& model, const Policy& policy,
                                          const RewardSpec& reward,
                                          const std::optional<StateBox>& state_box, double gamma,
                                          int T) {
  LipschitzProfile p;
  Matrix AB(model.state_dim(), model.state_dim() + model.action_dim());
  AB << model.effective_A(), model.effective_B();
  p.L_f = spectral_norm(AB);
  p.L_pi = spectral_norm(policy.theta());
  p.sigma_pi_bar = std::sqrt(std::max(0.0, policy.effective_cov().trace()));
  p.gamma = gamma;
  p.T = T;
  p.n_a = static_cast<int>(policy.action_dim());
  switch (reward.kind) {
    case RewardKind::ExponentialBell:
      p.L_r = std::numbers::sqrt2 * std::exp(-0.5) / reward.sigma_r;
      break;
    case RewardKind::NegativeStateNorm:
      p.L_r = 1.0;
      break;
    case RewardKind::QuadraticTracking: {
      if (!state_box)
        throw ContractViolation(
            "lipschitz_profile_linear: quadratic reward gradient is unbounded without a state box");
      const auto n = model.state_dim();
      std::vector<Vector> refs = reward.reference;
      if (refs.empty()) refs.push_back(Vector::Zero(n));
      double worst = 0.0;
      for (const auto& ref : refs) {
        const Vector far = (ref - state_box->lower).cwiseAbs().cwiseMax((ref - state_box->upper).cwiseAbs());
        worst = std::max(worst, far.norm());
      }
      p.L_r = worst;
      break;
    }
  }
  return p;
}

double expected_return_linear_quadratic(const LinearGaussianEnv& env, const Policy& policy,
                                        Averaging averaging) {
  if (env.task().reward.kind != RewardKind::QuadraticTracking)
    throw ContractViolation("expected_return_linear_quadratic: reward must be quadratic tracking");
  const Matrix G = env.A() + env.B() * policy.theta();
  const Matrix Q = env.noise_cov() + env.B() * policy.effective_cov() * env.B().transpose();
  Vector mu = env.init_mean();
  Matrix cov = env.init_cov();
  std::vector<double> rewards;
  for (int t = 0; t < env.horizon(); ++t) {
    rewards.push_back(env.task().reward(mu, t) - 0.5 * cov.trace());
    mu = G * mu;
    cov = G * cov * G.transpose() + Q;
  }
  return discounted_return(std::span<const double>(rewards), env.gamma(), averaging);
}

GeneralizedOpcGap generalized_opc_gap(const LinearGaussianEnv& env, const MeanModel& f,
                                      const Policy& policy, int rollouts, Averaging averaging,
                                      RandomStream& rng) {
  if (rollouts < 1) throw ContractViolation("generalized_opc_gap: need at least one rollout");
  const Task& task = env.task();
  double env_sum = 0.0;
  double opc_sum = 0.0;
  std::vector<double> env_rewards, opc_rewards;
  for (int i = 0; i < rollouts; ++i) {
    RandomStream child = rng.derive(rng.next_u64());
    RandomStream env_rng = child.derive(0);
    RandomStream ref_act_rng = child.derive(1);
    RandomStream opc_act_rng = child.derive(2);
    Vector s_ref = env.sample_initial_state(env_rng);
    Vector s = s_ref;
    env_rewards.clear();
    opc_rewards.clear();
    for (int t = 0; t < env.horizon(); ++t) {
      const Vector a_ref = act(policy, s_ref, ref_act_rng);
      const Vector a = act(policy, s, opc_act_rng);
      env_rewards.push_back(task.reward(s_ref, t));
      opc_rewards.push_back(task.reward(s, t));
      auto sample = generalized_opc_step(env, f, s, a, s_ref, a_ref, t, env_rng);
      s_ref = std::move(sample.reference_next);
      s = std::move(sample.next);
    }
    env_sum += discounted_return(std::span<const double>(env_rewards), env.gamma(), averaging);
    opc_sum += discounted_return(std::span<const double>(opc_rewards), env.gamma(), averaging);
  }
  GeneralizedOpcGap out;
  out.env_return = env_sum / rollouts;
  out.opc_return = opc_sum / rollouts;
  out.gap = std::abs(out.env_return - out.opc_return);
  return out;
}

Lemma1Result lemma1_convergence_study(const LinearGaussianEnv& env, const MeanModel& model,
                                      const Policy& policy, const std::vector<int>& B_grid,
                                      int trials, Averaging averaging, RandomStream& rng,
                                      std::optional<double> epsilon) {
  if (!policy.deterministic())
    throw ContractViolation("lemma1_convergence_study: policy must be deterministic");
  if (B_grid.empty() || trials < 1)
    throw ContractViolation("lemma1_convergence_study: empty B grid or no trials");
  Lemma1Result result;
  if (env.task().reward.kind == RewardKind::QuadraticTracking) {
    result.true_return = expected_return_linear_quadratic(env, policy, averaging);
  } else {
    RandomStream truth_rng = rng.derive(0x7275746855ull);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i)
      sum += discounted_return(rollout_env(env, policy, truth_rng), env.gamma(), averaging);
    result.true_return = sum / n;
  }
  result.epsilon = epsilon.value_or(0.05 * std::abs(result.true_return));

  for (int B : B_grid) {
    if (B < 1) throw ContractViolation("lemma1_convergence_study: B must be >= 1");
    std::vector<double> estimates;
    estimates.reserve(static_cast<std::size_t>(trials));
    double abs_error = 0.0;
    int exceed = 0;
    for (int trial = 0; trial < trials; ++trial) {
      ReplayBuffer buffer;
      for (int b = 0; b < B; ++b) {
        Trajectory traj = rollout_env(env, policy, rng);
        traj.index = b;
        buffer.add(std::move(traj));
      }
      const TransitionModel opc = OpcModel{model, buffer.snapshot()};
      const auto returns =
          model_returns(opc, policy, env.task(), buffer.trajectories(), env.gamma(), averaging, rng);
      const double estimate = mean_of(returns);
      const double err = std::abs(result.true_return - estimate);
      estimates.push_back(estimate);
      abs_error += err;
      exceed += err > result.epsilon;
    }
    Lemma1Row row;
    row.B = B;
    row.mean_abs_error = abs_error / trials;
    row.tail_probability = static_cast<double>(exceed) / trials;
    row.estimator_variance = return_stats(estimates).variance;
    result.rows.push_back(row);
  }
  return result;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ContractViolation("spearman_correlation: need two equal-length samples of size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = mean_of(rx), my = mean_of(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace opclab

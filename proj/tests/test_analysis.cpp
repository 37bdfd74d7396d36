#include "helpers.hpp"
#include "opclab/analysis.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace opclab;
using namespace testutil;

namespace {

double uniform(RandomStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

const Task kTracking{RewardSpec::tracking(), std::nullopt};

std::vector<Trajectory> collect(const LinearGaussianEnv& env, const Policy& policy, int n,
                                RandomStream& rng) {
  std::vector<Trajectory> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(rollout_env(env, policy, rng));
    out.back().index = i;
  }
  return out;
}

BufferSnapshot snapshot_of(const std::vector<Trajectory>& rollouts) {
  ReplayBuffer buffer;
  for (const auto& t : rollouts) buffer.add(t);
  return buffer.snapshot();
}

}  // namespace

TEST_CASE("improvement report example") {
  const auto r = improvement_report(3.0, 5.0, 3.2, 4.5);
  CHECK(r.true_improvement == doctest::Approx(2.0));
  CHECK(r.model_improvement == doctest::Approx(1.3));
  CHECK(r.off_policy_error == doctest::Approx(0.5));
  CHECK(r.on_policy_error == doctest::Approx(0.2));
  CHECK(r.lower_bound == doctest::Approx(0.6));
  CHECK(r.lower_bound <= r.true_improvement);

  const auto perfect = improvement_report(1.0, 1.7, 1.0, 1.7);
  CHECK(perfect.lower_bound == perfect.true_improvement);
}

TEST_CASE("improvement decomposition identities") {
  RandomStream rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double e0 = 10 * rng.normal(), e1 = 10 * rng.normal(), m0 = 10 * rng.normal(),
                 m1 = 10 * rng.normal();
    const auto r = improvement_report(e0, e1, m0, m1);
    CHECK(r.true_improvement >= r.lower_bound - 1e-12);
    CHECK(std::abs(r.reconstructed_true_improvement() - (e1 - e0)) <= 1e-12);
    CHECK(r.off_policy_error == std::abs(r.off_policy_gap));
    CHECK(r.on_policy_error == std::abs(r.on_policy_gap));
  }
}

TEST_CASE("return statistics") {
  const std::vector<double> xs{1, 2, 3, 4};
  const auto s = return_stats(xs);
  CHECK(s.mean == 2.5);
  CHECK(s.variance == doctest::Approx(5.0 / 3.0));
  CHECK(s.standard_error() == doctest::Approx(std::sqrt(5.0 / 12.0)));
  CHECK(return_stats(std::vector<double>{}).count == 0);
}

TEST_CASE("bound right-hand side") {
  LipschitzProfile p{1.0, 1.0, 1.0, 0.1, 0.9, 4, 1};
  CHECK(theorem1_rhs(p) == doctest::Approx(16.0).epsilon(1e-12));
  auto zero = p;
  zero.sigma_pi_bar = 0.0;
  CHECK(theorem1_rhs(zero) == 0.0);

  RandomStream rng(2);
  for (int k = 0; k < 200; ++k) {
    LipschitzProfile base{uniform(rng, 0, 2), uniform(rng, 0, 2), uniform(rng, 0, 2),
                          uniform(rng, 0, 1), uniform(rng, 0, 0.99),
                          1 + static_cast<int>(rng.uniform_index(10)),
                          1 + static_cast<int>(rng.uniform_index(3))};
    const double rhs = theorem1_rhs(base);
    CHECK(rhs >= 0.0);
    auto bigger = base;
    bigger.sigma_pi_bar += 0.1;
    CHECK(theorem1_rhs(bigger) >= rhs);
    bigger = base;
    bigger.L_f += 0.1;
    CHECK(theorem1_rhs(bigger) >= rhs);
    bigger = base;
    bigger.L_r += 0.1;
    CHECK(theorem1_rhs(bigger) >= rhs);
    // C2^T sqrt(T) only grows with T when C2 >= 1
    if (std::hypot(base.L_f, base.L_pi) >= 1.0) {
      bigger = base;
      bigger.T += 1;
      CHECK(theorem1_rhs(bigger) >= rhs);
    }
  }
  LipschitzProfile contracting{0.5, 1.0, 0.5, 0.1, 0.9, 4, 1};
  auto longer = contracting;
  longer.T = 5;
  CHECK(theorem1_rhs(longer) < theorem1_rhs(contracting));
}

TEST_CASE("horizon bound") {
  CHECK(horizon_bound(1, 0.5) == 1.0);
  CHECK(horizon_bound(1000000, 0.99) == doctest::Approx(9900.0));
  CHECK(horizon_bound(5, 0.0) == 0.0);
  CHECK(horizon_bound(3, 0.9) == doctest::Approx(6.0));
  CHECK(horizon_bound(100, 0.5) == doctest::Approx(2.0));
}

TEST_CASE("signed gradient distance") {
  CHECK(signed_gradient_distance(0.7, 0.7) == 0.0);
  CHECK(signed_gradient_distance(1.0, -1.0) == doctest::Approx(-0.5));
  CHECK(signed_gradient_distance(0.0, 1.0) == doctest::Approx(0.25));
  CHECK(signed_gradient_distance(-1.0, 0.0) == doctest::Approx(-0.25));
  CHECK(signed_gradient_distance(0.0, 0.0) == 0.0);
  RandomStream rng(3);
  for (int k = 0; k < 1000; ++k) {
    const double g1 = 5 * rng.normal(), g2 = 5 * rng.normal();
    const double d = signed_gradient_distance(g1, g2);
    CHECK(std::abs(d) <= 1.0);
    CHECK((d > 0.0) == (g1 * g2 > 0.0));
    CHECK(std::abs(d) == doctest::Approx(std::abs(signed_gradient_distance(g2, g1))));
  }
}

TEST_CASE("empirical W1") {
  using V = std::vector<double>;
  CHECK(wasserstein1_empirical(V{0, 1}, V{0, 1}) == 0.0);
  CHECK(wasserstein1_empirical(V{0, 0}, V{1, 1}) == 1.0);
  CHECK(wasserstein1_empirical(V{0, 2}, V{1, 3}) == 1.0);
  CHECK(wasserstein1_empirical(V{2, 0}, V{3, 1}) == 1.0);
  CHECK_THROWS_AS(wasserstein1_empirical(V{}, V{1}), ContractViolation);
  CHECK_THROWS(wasserstein1_empirical(V{1, 2}, V{1}));
  RandomStream rng(4);
  CHECK(wasserstein1_empirical(V{1, 1, 1}, V{3}, &rng) == 2.0);

  for (int k = 0; k < 200; ++k) {
    V a(20), b(20), c(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal() + 0.5;
      c[i] = 2 * rng.normal();
    }
    const double ab = wasserstein1_empirical(a, b), ba = wasserstein1_empirical(b, a);
    CHECK(ab == ba);
    CHECK(ab > 0.0);
    CHECK(ab <= wasserstein1_empirical(a, c) + wasserstein1_empirical(c, b) + 1e-12);
    V shuffled = a;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(wasserstein1_empirical(a, shuffled) == 0.0);
  }
}

TEST_CASE("Lipschitz profile") {
  const auto model = LearnedLinearModel::exact(scalar(1), scalar(1));
  const auto p = lipschitz_profile_linear(model, Policy(scalar(-0.5)), RewardSpec::bell(0.05),
                                          std::nullopt, 0.9, 10);
  CHECK(p.L_f == doctest::Approx(std::sqrt(2.0)));
  CHECK(p.sigma_pi_bar == 0.0);
  CHECK(p.L_pi == doctest::Approx(0.5));
  CHECK(p.L_r == doctest::Approx(17.156).epsilon(1e-4));

  // grid search over |d/ds exp(-s^2 / sigma^2)|
  double best = 0.0;
  for (double s = -0.2; s <= 0.2; s += 1e-6)
    best = std::max(best, std::abs(2.0 * s / (0.05 * 0.05) * std::exp(-s * s / (0.05 * 0.05))));
  CHECK(best == doctest::Approx(p.L_r).epsilon(1e-6));
  CHECK(best <= p.L_r);

  const Policy noisy(mat(1, 2, {3, 4}), scalar(0.04), 2.0);
  const auto q = lipschitz_profile_linear(LearnedLinearModel::exact(Matrix::Identity(2, 2), mat(2, 1, {1, 1})),
                                          noisy, RewardSpec::negative_norm(), std::nullopt, 0.5, 3);
  CHECK(q.L_pi == doctest::Approx(5.0));
  CHECK(q.sigma_pi_bar == doctest::Approx(0.4));
  CHECK(q.L_r == 1.0);
  // [I b][I b]^T = [[2, 1], [1, 2]] has largest eigenvalue 3
  CHECK(q.L_f == doctest::Approx(std::sqrt(3.0)));

  CHECK_THROWS_AS(lipschitz_profile_linear(model, Policy(scalar(0)), RewardSpec::tracking(),
                                           std::nullopt, 0.9, 3),
                  ContractViolation);
  const auto box = lipschitz_profile_linear(model, Policy(scalar(0)), RewardSpec::tracking({vec({0.5})}),
                                            StateBox{vec({-1}), vec({2})}, 0.9, 3);
  CHECK(box.L_r == 1.5);
}

TEST_CASE("expected linear-quadratic return") {
  // scalar closed form: E[s_t^2] = g^{2t}(m^2 + v) + q sum_k g^{2k}, q incl. action noise
  const double a = 1.0, b = 0.5, theta = -0.8, sig = 0.09, q = 0.01, m0 = 1.0, v0 = 0.04;
  const LinearGaussianEnv env(scalar(a), scalar(b), scalar(q), vec({m0}), scalar(v0), 15, 0.95, kTracking);
  const Policy policy(scalar(theta), scalar(sig));
  const double g = a + b * theta, total_q = q + b * b * sig;
  double second = m0 * m0 + v0, expected = 0.0, weight = 1.0;
  for (int t = 0; t < 15; ++t) {
    expected -= weight * 0.5 * second;
    weight *= 0.95;
    second = g * g * second + total_q;
  }
  CHECK(expected_return_linear_quadratic(env, policy, Averaging::Sum) == doctest::Approx(expected).epsilon(1e-12));

  RandomStream rng(5);
  const LinearGaussianEnv env2(mat(2, 2, {1, 0.1, 0, 1}), mat(2, 1, {0, 0.1}), mat(2, 2, {0, 0, 0, 0.01}),
                               vec({1, 0}), 0.01 * Matrix::Identity(2, 2), 20, 1.0,
                               Task{RewardSpec::tracking({vec({0.2, 0})}), std::nullopt});
  const Policy p2(mat(1, 2, {-1, -1}), scalar(0.25));
  std::vector<double> returns;
  for (const auto& traj : collect(env2, p2, 20000, rng))
    returns.push_back(discounted_return(traj, 1.0, Averaging::Mean));
  const auto stats = return_stats(returns);
  CHECK(std::abs(stats.mean - expected_return_linear_quadratic(env2, p2, Averaging::Mean)) <=
        3.0 * stats.standard_error());
}

TEST_CASE("on-policy error examples") {
  RandomStream rng(6);
  const Matrix A = mat(2, 2, {1, 0.1, 0, 1}), B = mat(2, 1, {0, 0.1});
  SUBCASE("exact model on a deterministic env") {
    const LinearGaussianEnv env(A, B, Matrix::Zero(2, 2), vec({1, 0}), Matrix::Zero(2, 2), 20, 0.99, kTracking);
    CHECK(on_policy_error(env, LearnedLinearModel::exact(A, B), Policy(mat(1, 2, {-1, -1})), 5,
                          Averaging::Sum, rng) == 0.0);
  }
  SUBCASE("OPC on its own reference set") {
    const LinearGaussianEnv env(A, B, mat(2, 2, {0, 0, 0, 0.01}), vec({1, 0}), 0.01 * Matrix::Identity(2, 2),
                                20, 0.99, kTracking);
    const Policy policy(mat(1, 2, {-1, -1}));
    const auto rollouts = collect(env, policy, 10, rng);
    const auto biased = LearnedLinearModel::exact(A + 0.2 * Matrix::Identity(2, 2), B);
    const TransitionModel opc = OpcModel{biased, snapshot_of(rollouts)};
    CHECK(on_policy_error(opc, policy, kTracking, rollouts, 0.99, Averaging::Sum, rng) == 0.0);
    CHECK(on_policy_error(biased, policy, kTracking, rollouts, 0.99, Averaging::Sum, rng) > 0.0);
  }
  SUBCASE("OPC beats the biased model on the scalar system") {
    const LinearGaussianEnv env(scalar(1), scalar(1), scalar(0.01), vec({1}), scalar(0.01), 30, 1.0, kTracking);
    const Policy policy(scalar(-0.5), scalar(0.01));
    const auto rollouts = collect(env, policy, 200, rng);
    auto biased = LearnedLinearModel::exact(scalar(1), scalar(1)).with_injected_error(scalar(0.5), scalar(0));
    biased.noise_cov = scalar(0.01);
    const TransitionModel opc = OpcModel{biased, snapshot_of(rollouts)};
    const double e_opc = on_policy_error(opc, policy, kTracking, rollouts, 1.0, Averaging::Mean, rng);
    const double e_raw = on_policy_error(biased, policy, kTracking, rollouts, 1.0, Averaging::Mean, rng);
    CHECK(e_opc < e_raw);
  }
}

TEST_CASE("off-policy error") {
  RandomStream rng(7);
  const LinearGaussianEnv det_env(scalar(1), scalar(1), scalar(0), vec({1}), scalar(0), 30, 1.0, kTracking);
  const Policy policy(scalar(-0.5));
  const auto rollouts = collect(det_env, policy, 3, rng);
  const auto biased = LearnedLinearModel::exact(scalar(1), scalar(1)).with_injected_error(scalar(0.3), scalar(0));
  const TransitionModel opc = OpcModel{biased, snapshot_of(rollouts)};
  // querying the data policy again is on-policy
  CHECK(off_policy_error(det_env, opc, policy, 3, Averaging::Mean, rng) == 0.0);
  CHECK(off_policy_error(det_env, opc, Policy(scalar(-0.8)), 3, Averaging::Mean, rng) > 1e-6);
  CHECK(off_policy_error(det_env, biased, Policy(scalar(-0.8)), 3, Averaging::Mean, rng) >
        off_policy_error(det_env, opc, Policy(scalar(-0.8)), 3, Averaging::Mean, rng));
}

TEST_CASE("generalized OPC gap") {
  RandomStream rng(8);
  const LinearGaussianEnv env(mat(2, 2, {1, 0.1, 0, 1}), mat(2, 1, {0, 0.1}), mat(2, 2, {0, 0, 0, 0.01}),
                              vec({1, 0}), Matrix::Zero(2, 2), 6, 0.9,
                              Task{RewardSpec::bell(1.0), std::nullopt});
  const auto f = LearnedLinearModel::exact(mat(2, 2, {1.1, 0.1, 0, 0.9}), mat(2, 1, {0.05, 0.2}));
  const auto det = generalized_opc_gap(env, f, Policy(mat(1, 2, {-1, -1}), scalar(0.25), 0.0), 1000,
                                       Averaging::Sum, rng);
  CHECK(det.gap == 0.0);
  CHECK(det.env_return == det.opc_return);

  const Policy noisy(mat(1, 2, {-1, -1}), scalar(0.25), 1.0);
  const auto gap = generalized_opc_gap(env, f, noisy, 10000, Averaging::Sum, rng);
  CHECK(gap.gap > 0.0);
  const auto profile = lipschitz_profile_linear(f, noisy, env.task().reward, std::nullopt, env.gamma(), env.horizon());
  CHECK(gap.gap <= theorem1_rhs(profile));

  RandomStream a(9), b(9);
  CHECK(generalized_opc_gap(env, f, noisy, 100, Averaging::Sum, a).gap ==
        generalized_opc_gap(env, f, noisy, 100, Averaging::Sum, b).gap);
}

TEST_CASE("OPC return estimate on a deterministic env is exact") {
  RandomStream rng(10);
  const LinearGaussianEnv env(mat(2, 2, {1, 0.1, 0, 1}), mat(2, 1, {0, 0.1}), Matrix::Zero(2, 2), vec({1, 0}),
                              Matrix::Zero(2, 2), 20, 1.0, kTracking);
  const auto f = LearnedLinearModel::exact(mat(2, 2, {1.05, 0.1, 0, 1.05}), mat(2, 1, {0, 0.1}));
  const auto result = lemma1_convergence_study(env, f, Policy(mat(1, 2, {-1, -1})), {1, 4, 16}, 5,
                                               Averaging::Mean, rng);
  REQUIRE(result.rows.size() == 3);
  for (const auto& row : result.rows) {
    CHECK(row.mean_abs_error <= 1e-12);
    CHECK(row.tail_probability == 0.0);
    CHECK(row.estimator_variance <= 1e-24);
  }
  CHECK(result.epsilon == doctest::Approx(0.05 * std::abs(result.true_return)));
  CHECK_THROWS_AS(lemma1_convergence_study(env, f, Policy(mat(1, 2, {-1, -1}), scalar(0.1)), {4}, 5,
                                           Averaging::Mean, rng),
                  ContractViolation);
}

TEST_CASE("Spearman correlation") {
  using V = std::vector<double>;
  CHECK(spearman_correlation(V{1, 2, 3, 4}, V{10, 20, 35, 100}) == doctest::Approx(1.0));
  CHECK(spearman_correlation(V{1, 2, 3, 4}, V{4, 3, 2, 1}) == doctest::Approx(-1.0));
  // ranks x = 1,2,3,4; y = 1.5,1.5,3,4 -> Pearson of ranks
  const double r = spearman_correlation(V{1, 2, 3, 4}, V{5, 5, 7, 9});
  CHECK(r == doctest::Approx(0.9486832980505138));
  CHECK_THROWS(spearman_correlation(V{1, 2}, V{1}));
}

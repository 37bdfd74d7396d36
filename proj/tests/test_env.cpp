#include "helpers.hpp"
#include "opclab/env.hpp"

#include <doctest.h>

#include <cmath>

using namespace opclab;
using namespace testutil;

namespace {

LinearGaussianEnv scalar_det(double A, double B, int T) {
  return LinearGaussianEnv(scalar(A), scalar(B), scalar(0.0), vec({1.0}), scalar(0.0), T, 1.0,
                           Task{RewardSpec::bell(0.05), std::nullopt});
}

std::vector<double> first_coords(const Trajectory& traj) {
  std::vector<double> out;
  for (const auto& s : traj.states()) out.push_back(s(0));
  return out;
}

}  // namespace

TEST_CASE("env_step examples") {
  RandomStream rng(0);
  const auto env = scalar_det(1.0, 1.0, 3);
  CHECK(env_step(env, vec({1}), vec({-1}), rng)(0) == 0.0);
  CHECK(env_step(env, vec({1}), vec({0}), rng)(0) == 1.0);

  const auto di = double_integrator(0.1, 0.0);
  const Vector next = env_step(di, vec({0, 1}), vec({1}), rng);
  CHECK(next(0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(next(1) == doctest::Approx(1.1).epsilon(1e-15));
}

TEST_CASE("env_step rejects mismatched dimensions") {
  RandomStream rng(0);
  const auto di = double_integrator();
  CHECK_THROWS_AS(env_step(di, vec({1}), vec({1}), rng), ContractViolation);
  CHECK_THROWS_AS(env_step(di, vec({1, 0}), vec({1, 2}), rng), ContractViolation);
}

TEST_CASE("environment validation") {
  const Task task{RewardSpec::bell(0.05), std::nullopt};
  CHECK_THROWS_AS(LinearGaussianEnv(scalar(1), scalar(1), scalar(-1), vec({1}), scalar(0), 3, 1.0, task),
                  ContractViolation);
  CHECK_THROWS_AS(LinearGaussianEnv(scalar(1), scalar(1), scalar(0), vec({1}), scalar(0), 0, 1.0, task),
                  ContractViolation);
  CHECK_THROWS_AS(LinearGaussianEnv(scalar(1), scalar(1), scalar(0), vec({1}), scalar(0), 3, 1.5, task),
                  ContractViolation);
  CHECK_THROWS_AS(RewardSpec::bell(0.0), ContractViolation);
}

TEST_CASE("rollout_env examples") {
  RandomStream rng(0);
  const auto env = scalar_det(1.0, 1.0, 3);
  CHECK(first_coords(rollout_env(env, Policy(scalar(-1)), rng)) == std::vector<double>{1, 0, 0, 0});
  CHECK(first_coords(rollout_env(env, Policy(scalar(0)), rng)) == std::vector<double>{1, 1, 1, 1});
  CHECK(first_coords(rollout_env(env, Policy(scalar(-2)), rng)) ==
        std::vector<double>{1, -1, 1, -1});
}

TEST_CASE("rollout_env stops at a terminal state") {
  Task task{RewardSpec::negative_norm(), StateBox{vec({-10}), vec({10})}};
  const LinearGaussianEnv env(scalar(2), scalar(0), scalar(0), vec({1}), scalar(0), 20, 1.0, task);
  RandomStream rng(0);
  const auto traj = rollout_env(env, Policy(scalar(0)), rng);
  // 1, 2, 4, 8, 16: the fourth transition leaves the box
  REQUIRE(traj.size() == 4);
  CHECK(traj.transitions.back().terminal);
  CHECK_NOTHROW(validate_trajectory(traj));
}

TEST_CASE("discounted_return examples") {
  const std::vector<double> r{1, 1, 1};
  CHECK(discounted_return(r, 0.5, Averaging::Sum) == 1.75);
  CHECK(discounted_return(r, 1.0, Averaging::Mean) == 1.0);
  CHECK_THROWS(discounted_return(std::vector<double>{}, 1.0, Averaging::Sum));

  RandomStream rng(0);
  const auto env = scalar_env();
  const auto traj = rollout_env(env, Policy(scalar(-1)), rng);
  const double expected = (std::exp(-400.0) + 59.0) / 60.0;
  CHECK(discounted_return(traj, 1.0, Averaging::Mean) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("closed_loop_stable examples") {
  CHECK(closed_loop_stable(1, 0, 1, 0, -1));
  CHECK_FALSE(closed_loop_stable(1, 0, 1, 0, -2.5));
  CHECK_FALSE(closed_loop_stable(1, 0.5, 1, 0, -0.4));
  // marginal gains are excluded
  CHECK_FALSE(closed_loop_stable(1, 0, 1, 0, 0.0));
  CHECK_FALSE(closed_loop_stable(1, 0, 1, 0, -2.0 + 1e-12));
}

TEST_CASE("deterministic rollouts are bitwise reproducible") {
  const auto env = scalar_env(1.0, 1.0, 1.0, 0.05, 60);
  RandomStream a(3), b(3);
  const auto ta = rollout_env(env, Policy(scalar(-0.7)), a);
  const auto tb = rollout_env(env, Policy(scalar(-0.7)), b);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.transitions[i].next_state == tb.transitions[i].next_state);

  const auto di = double_integrator();
  RandomStream c(5), d(5);
  const auto tc = rollout_env(di, Policy(mat(1, 2, {-1, -1}), scalar(0.25)), c);
  const auto td = rollout_env(di, Policy(mat(1, 2, {-1, -1}), scalar(0.25)), d);
  for (std::size_t i = 0; i < tc.size(); ++i) CHECK(tc.transitions[i].next_state == td.transitions[i].next_state);
}

TEST_CASE("noise-free step is linear") {
  RandomStream rng(11);
  const auto env = double_integrator(0.1, 0.0);
  for (int k = 0; k < 20; ++k) {
    const Vector s1 = rng.normal_vector(2), s2 = rng.normal_vector(2);
    const Vector a1 = rng.normal_vector(1), a2 = rng.normal_vector(1);
    const Vector lhs = env_step(env, s1 + s2, a1 + a2, rng);
    const Vector rhs = env_step(env, s1, a1, rng) + env_step(env, s2, a2, rng);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bell-reward returns are bounded") {
  RandomStream rng(2);
  for (int k = 0; k < 50; ++k) {
    const double theta = -2.0 * rng.uniform();
    const double gamma = rng.uniform();
    const auto env = scalar_env(1.0, 1.0, 0.01, 0.05, 20, gamma);
    const auto traj = rollout_env(env, Policy(scalar(theta)), rng);
    const double ret = discounted_return(traj, gamma, Averaging::Sum);
    double cap = 0.0;
    for (int t = 0; t < 20; ++t) cap += std::pow(gamma, t);
    CHECK(ret > 0.0);
    CHECK(ret <= cap + 1e-12);
  }
}

TEST_CASE("stable scalar closed loops contract") {
  RandomStream rng(4);
  int checked = 0;
  while (checked < 100) {
    const double A = 4.0 * rng.uniform() - 2.0;
    const double B = 4.0 * rng.uniform() - 2.0;
    const double theta = 4.0 * rng.uniform() - 2.0;
    if (!closed_loop_stable(A, 0, B, 0, theta)) continue;
    ++checked;
    const double rho = std::abs(A + B * theta);
    const auto env = scalar_det(A, B, 30);
    const auto states = rollout_env(env, Policy(scalar(theta)), rng).states();
    for (std::size_t t = 0; t < states.size(); ++t)
      CHECK(std::abs(states[t](0)) <= std::pow(rho, static_cast<double>(t)) * (1.0 + 1e-12));
  }
}

TEST_CASE("reward kinds") {
  const auto bell = RewardSpec::bell(0.5);
  CHECK(bell(vec({0.0}), 0) == 1.0);
  CHECK(bell(vec({0.5}), 0) == doctest::Approx(std::exp(-1.0)));
  const Vector g = bell.gradient(vec({0.3}), 0);
  const double h = 1e-6;
  CHECK(g(0) == doctest::Approx((bell(vec({0.3 + h}), 0) - bell(vec({0.3 - h}), 0)) / (2 * h)).epsilon(1e-6));

  const auto track = RewardSpec::tracking({vec({1, 0}), vec({2, 0})});
  CHECK(track(vec({1, 0}), 0) == 0.0);
  CHECK(track(vec({0, 0}), 1) == -2.0);
  CHECK(track(vec({0, 0}), 7) == -2.0);
  CHECK(RewardSpec::tracking()(vec({3, 4}), 0) == -12.5);
  CHECK(RewardSpec::negative_norm()(vec({3, 4}), 0) == -5.0);
}

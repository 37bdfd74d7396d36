#include "helpers.hpp"
#include "opclab/models.hpp"
#include "opclab/rollout.hpp"

#include <doctest.h>

#include <cmath>

using namespace opclab;
using namespace testutil;

namespace {

Trajectory make_traj(const std::vector<Vector>& states, const std::vector<Vector>& actions,
                     int iteration = 0, int index = 0) {
  Trajectory traj;
  traj.iteration = iteration;
  traj.index = index;
  for (std::size_t t = 0; t + 1 < states.size(); ++t)
    traj.transitions.push_back(
        Transition{static_cast<int>(t), states[t], actions[t], states[t + 1], 0.0, false});
  return traj;
}

BufferSnapshot single(const Trajectory& traj) {
  ReplayBuffer buffer;
  buffer.add(traj);
  return buffer.snapshot();
}

// Ordinary least squares through the normal equations, solved by LDLT.
Matrix normal_equations_oracle(const std::vector<Transition>& data) {
  const Eigen::Index ns = data[0].state.size(), na = data[0].action.size(), p = ns + na + 1;
  Matrix XtX = Matrix::Zero(p, p), XtY = Matrix::Zero(p, ns);
  for (const auto& tr : data) {
    Vector x(p);
    x << tr.state, tr.action, 1.0;
    XtX += x * x.transpose();
    XtY += x * tr.next_state.transpose();
  }
  return XtX.ldlt().solve(XtY);
}

std::vector<Transition> linear_data(RandomStream& rng, const Matrix& A, const Matrix& B,
                                    const Vector& d, double noise, int m) {
  std::vector<Transition> data;
  for (int i = 0; i < m; ++i) {
    Transition tr;
    tr.state = rng.normal_vector(A.rows());
    tr.action = rng.normal_vector(B.cols());
    tr.next_state = A * tr.state + B * tr.action + d + noise * rng.normal_vector(A.rows());
    data.push_back(tr);
  }
  return data;
}

double residual_sum(const std::vector<Transition>& data, const Matrix& A, const Matrix& B,
                    const Vector& d) {
  double sum = 0.0;
  for (const auto& tr : data) sum += (tr.next_state - A * tr.state - B * tr.action - d).squaredNorm();
  return sum;
}

}  // namespace

TEST_CASE("least squares recovers exact linear maps") {
  RandomStream rng(1);
  auto data = linear_data(rng, scalar(0.9), scalar(0.5), vec({0}), 0.0, 10);
  auto m = fit_least_squares(data);
  CHECK(std::abs(m.A(0, 0) - 0.9) <= 1e-10);
  CHECK(std::abs(m.B(0, 0) - 0.5) <= 1e-10);
  CHECK(std::abs(m.d(0)) <= 1e-10);

  data = linear_data(rng, scalar(1), scalar(1), vec({0.3}), 0.0, 10);
  m = fit_least_squares(data);
  CHECK(std::abs(m.d(0) - 0.3) <= 1e-10);
}

TEST_CASE("least squares matches the normal-equations oracle") {
  RandomStream rng(2);
  const auto data = linear_data(rng, scalar(1), scalar(1), vec({0}), 0.1, 1000);
  const Matrix W = normal_equations_oracle(data);
  const auto m = fit_least_squares(data);
  CHECK(std::abs(m.A(0, 0) - W(0, 0)) <= 1e-8);
  CHECK(std::abs(m.B(0, 0) - W(1, 0)) <= 1e-8);
  CHECK(std::abs(m.d(0) - W(2, 0)) <= 1e-8);

  const auto data2 = linear_data(rng, mat(2, 2, {0.9, 0.1, -0.2, 0.8}), mat(2, 1, {0, 0.1}),
                                 vec({0.05, -0.1}), 0.1, 500);
  const Matrix W2 = normal_equations_oracle(data2);
  const auto m2 = fit_least_squares(data2);
  CHECK(max_abs_diff(m2.A, W2.topRows(2).transpose()) <= 1e-8);
  CHECK(max_abs_diff(m2.B, W2.middleRows(2, 1).transpose()) <= 1e-8);
  CHECK(max_abs_diff(m2.d, W2.bottomRows(1).transpose()) <= 1e-8);
}

TEST_CASE("least squares is locally optimal") {
  RandomStream rng(3);
  const auto data = linear_data(rng, mat(2, 2, {1, 0.1, 0, 1}), mat(2, 1, {0, 0.1}),
                                vec({0, 0}), 0.2, 200);
  const auto m = fit_least_squares(data);
  const double best = residual_sum(data, m.A, m.B, m.d);
  CHECK(best == doctest::Approx(m.residual_sum).epsilon(1e-10));
  for (int k = 0; k < 100; ++k) {
    const double scale = 1e-3;
    const Matrix A = m.A + scale * Matrix(rng.normal_vector(4).reshaped(2, 2));
    const Matrix B = m.B + scale * Matrix(rng.normal_vector(2));
    const Vector d = m.d + scale * rng.normal_vector(2);
    CHECK(residual_sum(data, A, B, d) >= best);
  }
}

TEST_CASE("rank-deficient fits name the deficient dimension") {
  RandomStream rng(4);
  auto data = linear_data(rng, scalar(1), scalar(1), vec({0}), 0.0, 20);
  for (auto& tr : data) {
    tr.action(0) = 0.0;
    tr.next_state = tr.state;
  }
  try {
    fit_least_squares(data);
    FAIL("expected SingularFitError");
  } catch (const SingularFitError& e) {
    CHECK(e.deficient_column() == 1);
    CHECK(std::string(e.what()).find("action[0]") != std::string::npos);
  }
  // a = -s under a deterministic linear policy
  for (auto& tr : data) tr.action(0) = -tr.state(0);
  CHECK_THROWS_AS(fit_least_squares(data), SingularFitError);
  CHECK_NOTHROW(fit_least_squares(data, 1e-6));
  CHECK_THROWS_AS(fit_least_squares(std::vector<Transition>(data.begin(), data.begin() + 2)),
                  SingularFitError);
}

TEST_CASE("time offsets") {
  RandomStream rng(5);
  const Matrix A = mat(2, 2, {1, 0.1, 0, 1}), B = mat(2, 1, {0, 0.1});
  std::vector<Vector> states{vec({1, 0})}, actions, noise;
  for (int t = 0; t < 10; ++t) {
    actions.push_back(rng.normal_vector(1));
    noise.push_back(0.1 * rng.normal_vector(2));
    states.push_back(A * states.back() + B * actions.back() + noise.back());
  }
  const auto traj = make_traj(states, actions);
  const auto offsets = fit_time_offsets(traj, A, B);
  REQUIRE(offsets.offsets.size() == 10);
  for (int t = 0; t < 10; ++t) CHECK(max_abs_diff(offsets.offsets[t], noise[t]) <= 1e-15);

  const Matrix dA = mat(2, 2, {0.05, 0, 0, -0.05});
  const auto biased = fit_time_offsets(traj, A + dA, B);
  for (int t = 0; t < 10; ++t)
    CHECK(max_abs_diff(biased.offsets[t], noise[t] - dA * states[t]) <= 1e-12);

  std::vector<Vector> clean{vec({1, 0})};
  for (int t = 0; t < 10; ++t) clean.push_back(A * clean.back() + B * actions[t]);
  for (const auto& d : fit_time_offsets(make_traj(clean, actions), A, B).offsets)
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model_mean examples") {
  const auto biased = LearnedLinearModel::exact(scalar(1), scalar(1)).with_injected_error(scalar(0.5), scalar(0));
  CHECK(model_mean(biased, vec({1}), vec({0}))(0) == 1.5);

  const auto member = LearnedLinearModel::exact(mat(2, 2, {1, 0.1, 0, 1}), mat(2, 1, {0, 0.1}));
  const EnsembleModel ensemble{{member, member, member}};
  const Vector s = vec({0.3, -0.2}), a = vec({0.7});
  CHECK(max_abs_diff(model_mean(ensemble, s, a), model_mean(member, s, a)) <= 1e-15);

  const TimeOffsetModel offset{scalar(0), scalar(0), {vec({0}), vec({2})}};
  CHECK(model_mean(offset, vec({5}), vec({5}), 1)(0) == 2.0);
  CHECK_THROWS_AS(model_mean(offset, vec({5}), vec({5}), 2), OutOfDataError);
}

TEST_CASE("injected errors compose additively") {
  RandomStream rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto base = LearnedLinearModel::exact(Matrix(rng.normal_vector(4).reshaped(2, 2)),
                                                Matrix(rng.normal_vector(2)));
    const Matrix dA = rng.normal_vector(4).reshaped(2, 2), dB = rng.normal_vector(2);
    const Vector s = rng.normal_vector(2), a = rng.normal_vector(1);
    const Vector lhs = model_mean(base.with_injected_error(dA, dB), s, a);
    CHECK(max_abs_diff(lhs, model_mean(base, s, a) + dA * s + dB * a) <= 1e-12);
  }
}

TEST_CASE("replay_step examples") {
  const auto traj = make_traj({vec({1}), vec({0}), vec({0})}, {vec({-1}), vec({0})});
  const ReplayModel replay{single(traj)};
  CHECK(replay_step(replay, 0, 0)(0) == 0.0);
  CHECK(replay_step(replay, 1, 0)(0) == 0.0);
  CHECK_THROWS_AS(replay_step(replay, 2, 0), OutOfDataError);
  CHECK_THROWS_AS(replay_step(replay, 0, 1), OutOfDataError);
}

TEST_CASE("replay ignores actions") {
  RandomStream rng(7);
  const auto traj = make_traj({vec({1}), vec({0.4}), vec({0.1})}, {vec({-0.6}), vec({-0.3})});
  const TransitionModel replay = ReplayModel{single(traj)};
  for (int k = 0; k < 20; ++k) {
    const auto next = model_next(replay, rng.normal_vector(1), rng.normal_vector(1), 1, 0, rng);
    REQUIRE(next);
    CHECK((*next)(0) == 0.1);
  }
}

TEST_CASE("opc_step examples") {
  // f(s, a) = s, recorded (1.2, a) -> 2
  const auto f = LearnedLinearModel::exact(scalar(1), scalar(0));
  const auto traj = make_traj({vec({1.2}), vec({2.0})}, {vec({0.3})});
  const OpcModel opc{MeanModel(f), single(traj)};
  CHECK(opc_step(opc, vec({1.5}), vec({9}), 0, 0)(0) == doctest::Approx(2.3).epsilon(1e-15));
  CHECK(opc_step(opc, vec({1.2}), vec({0.3}), 0, 0)(0) == 2.0);
  CHECK_THROWS_AS(opc_step(opc, vec({1.2}), vec({0.3}), 1, 0), OutOfDataError);
}

TEST_CASE("zero-error OPC equals the deterministic environment") {
  RandomStream rng(8);
  const Matrix A = mat(2, 2, {1, 0.1, 0, 1}), B = mat(2, 1, {0, 0.1});
  const auto env = LinearGaussianEnv(A, B, Matrix::Zero(2, 2), vec({1, 0}), Matrix::Zero(2, 2), 10,
                                     1.0, Task{RewardSpec::tracking(), std::nullopt});
  const auto ref = rollout_env(env, Policy(mat(1, 2, {-1, -1})), rng);
  const OpcModel opc{MeanModel(LearnedLinearModel::exact(A, B)), single(ref)};
  for (double x = -2; x <= 2; x += 0.5)
    for (double v = -2; v <= 2; v += 0.5)
      for (double a = -1; a <= 1; a += 0.5)
        for (int t = 0; t < 10; t += 3) {
          const Vector s = vec({x, v}), u = vec({a});
          CHECK(max_abs_diff(opc_step(opc, s, u, t, 0), env_step(env, s, u, rng)) <= 1e-12);
        }
}

TEST_CASE("OPC reproduces recorded trajectories on-policy") {
  RandomStream rng(9);
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    const int m = 1 + static_cast<int>(rng.uniform_index(2));
    const Matrix A = 0.5 * Matrix(rng.normal_vector(n * n).reshaped(n, n));
    const Matrix B = rng.normal_vector(n * m).reshaped(n, m);
    const LinearGaussianEnv env(A, B, 0.05 * Matrix::Identity(n, n), rng.normal_vector(n),
                                0.1 * Matrix::Identity(n, n), 15, 1.0,
                                Task{RewardSpec::tracking(), std::nullopt});
    const Policy policy(0.3 * Matrix(rng.normal_vector(m * n).reshaped(m, n)),
                        0.2 * Matrix::Identity(m, m));
    const auto ref = rollout_env(env, policy, rng);
    const auto f = LearnedLinearModel::exact(A + 0.2 * Matrix(rng.normal_vector(n * n).reshaped(n, n)),
                                             B + 0.2 * Matrix(rng.normal_vector(n * m).reshaped(n, m)));
    const OpcModel opc{MeanModel(f), single(ref)};
    Vector s = ref.transitions.front().state;
    for (const auto& tr : ref.transitions) {
      s = opc_step(opc, s, tr.action, tr.t, 0);
      CHECK(max_abs_diff(s, tr.next_state) == 0.0);
    }
  }
}

TEST_CASE("generalized OPC step") {
  RandomStream rng(10);
  const Matrix A = mat(2, 2, {1, 0.1, 0, 1}), B = mat(2, 1, {0, 0.1});
  const Task task{RewardSpec::tracking(), std::nullopt};
  const auto f = LearnedLinearModel::exact(A + 0.1 * Matrix::Identity(2, 2), B * 1.5);
  const Vector s = vec({0.5, -0.3}), a = vec({0.8}), s_ref = vec({0.2, 0.1}), a_ref = vec({-0.4});

  SUBCASE("noise-free env reduces to opc_step") {
    const LinearGaussianEnv env(A, B, Matrix::Zero(2, 2), vec({0, 0}), Matrix::Zero(2, 2), 5, 1.0, task);
    const auto g = generalized_opc_step(env, MeanModel(f), s, a, s_ref, a_ref, 0, rng);
    const auto ref = make_traj({s_ref, A * s_ref + B * a_ref}, {a_ref});
    const OpcModel opc{MeanModel(f), single(ref)};
    CHECK(max_abs_diff(g.next, opc_step(opc, s, a, 0, 0)) <= 1e-15);
  }

  const LinearGaussianEnv env(A, B, mat(2, 2, {0.04, 0.01, 0.01, 0.09}), vec({0, 0}),
                              Matrix::Zero(2, 2), 5, 1.0, task);
  SUBCASE("on-policy query returns the environment sample") {
    for (int k = 0; k < 20; ++k) {
      const auto g = generalized_opc_step(env, MeanModel(f), s_ref, a_ref, s_ref, a_ref, 0, rng);
      CHECK(max_abs_diff(g.next, g.reference_next) <= 1e-15);
    }
  }
  SUBCASE("mean matches the analytic shift") {
    const int n = 100000;
    Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
    for (int k = 0; k < n; ++k) {
      const Vector x = generalized_opc_step(env, MeanModel(f), s, a, s_ref, a_ref, 0, rng).next;
      sum += x;
      sq += x.cwiseProduct(x);
    }
    const Vector mean = sum / n;
    const Vector se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
    const Vector expected = A * s_ref + B * a_ref + (f.A - A) * (s - s_ref) + (f.B - B) * (a - a_ref) +
                            A * (s - s_ref) + B * (a - a_ref);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - expected(i)) <= 3.0 * se(i));
  }
}

TEST_CASE("per-member OPC") {
  RandomStream rng(11);
  const Matrix A = mat(2, 2, {1, 0.1, 0, 1}), B = mat(2, 1, {0, 0.1});
  const auto ref = make_traj({vec({1, 0}), vec({1, -0.1}), vec({0.99, -0.15})}, {vec({-1}), vec({-0.5})});
  const auto snapshot = single(ref);
  const auto m1 = LearnedLinearModel::exact(A, B);
  const auto m2 = m1.with_injected_error(Matrix::Zero(2, 2), mat(2, 1, {0.2, -0.1}));

  const auto one = opc_per_member(EnsembleModel{{m1}}, snapshot);
  REQUIRE(one.size() == 1);
  const OpcModel direct{MeanModel(m1), snapshot};
  const Vector s = vec({0.7, 0.2}), a = vec({0.3});
  CHECK(max_abs_diff(opc_step(one[0], s, a, 1, 0), opc_step(direct, s, a, 1, 0)) == 0.0);

  const auto both = opc_per_member(EnsembleModel{{m1, m2}}, snapshot);
  for (const auto& tr : ref.transitions)
    for (const auto& member : both)
      CHECK(max_abs_diff(opc_step(member, tr.state, tr.action, tr.t, 0), tr.next_state) == 0.0);
  const Vector diff = opc_step(both[1], s, a, 0, 0) - opc_step(both[0], s, a, 0, 0);
  CHECK(max_abs_diff(diff, mat(2, 1, {0.2, -0.1}) * (a - ref.transitions[0].action)) <= 1e-15);
  CHECK_THROWS(opc_per_member(EnsembleModel{}, snapshot));
}

TEST_CASE("buffer retention") {
  ReplayBuffer buffer;
  const auto traj = make_traj({vec({1}), vec({0})}, {vec({-1})});
  for (int it = 1; it <= 3; ++it) {
    auto t = traj;
    t.iteration = it;
    buffer.add(t);
  }
  auto iterations = [](const ReplayBuffer& b) {
    std::vector<int> out;
    for (const auto& t : b.trajectories()) out.push_back(t.iteration);
    return out;
  };
  CHECK(iterations(buffer_retain(buffer, 3, 2)) == std::vector<int>{2, 3});
  CHECK(iterations(buffer_retain(buffer, 3, 5)) == std::vector<int>{1, 2, 3});
  CHECK(iterations(buffer_retain(buffer, 3, 1)) == std::vector<int>{3});
  CHECK_THROWS(buffer_retain(buffer, 3, 0));
}

TEST_CASE("replay buffer validates trajectories") {
  ReplayBuffer buffer;
  auto bad = make_traj({vec({1}), vec({0}), vec({0})}, {vec({-1}), vec({0})});
  bad.transitions[1].t = 5;
  CHECK_THROWS_AS(buffer.add(bad), ContractViolation);
  auto early_terminal = make_traj({vec({1}), vec({0}), vec({0})}, {vec({-1}), vec({0})});
  early_terminal.transitions[0].terminal = true;
  CHECK_THROWS_AS(buffer.add(early_terminal), ContractViolation);
  CHECK_THROWS_AS(buffer.add(Trajectory{}), ContractViolation);
}

TEST_CASE("bootstrap ensemble") {
  RandomStream rng(12);
  const auto data = linear_data(rng, scalar(0.9), scalar(0.5), vec({0}), 0.05, 200);
  const auto ens = fit_bootstrap_ensemble(data, 5, rng);
  REQUIRE(ens.members.size() == 5);
  for (const auto& m : ens.members) {
    CHECK(m.A(0, 0) == doctest::Approx(0.9).epsilon(0.05));
    CHECK(m.B(0, 0) == doctest::Approx(0.5).epsilon(0.05));
  }
  CHECK(ens.members[0].A(0, 0) != ens.members[1].A(0, 0));
}

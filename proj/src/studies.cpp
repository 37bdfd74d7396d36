#include "opclab/studies.hpp"

#include "opclab/ilc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace opclab {

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw ContractViolation("linspace: need at least one point");
  if (n == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  out.back() = hi;
  return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string> kCommonKeys{"experiment.seed", "experiment.subcommand"};

std::set<std::string> with_common(std::set<std::string> keys) {
  keys.insert(kCommonKeys.begin(), kCommonKeys.end());
  return keys;
}

const std::set<std::string> kScalarEnvKeys{"env.A", "env.B", "env.s0", "env.sigma_r", "env.T"};
const std::set<std::string> kDoubleIntegratorKeys{"env.dt",    "env.velocity_noise_var",
                                                  "env.T",     "model.dA",
                                                  "model.dB",  "policy.theta",
                                                  "policy.sigma"};

std::set<std::string> merge(std::set<std::string> a, const std::set<std::string>& b) {
  a.insert(b.begin(), b.end());
  return a;
}

int get_count(const ExperimentConfig& cfg, const std::string& key, int fallback, int min) {
  const long long v = cfg.get_int(key, fallback);
  if (v < min || v > std::numeric_limits<int>::max())
    throw ConfigError(key, "must be an integer >= " + std::to_string(min));
  return static_cast<int>(v);
}

ScalarStudy read_scalar_env(const ExperimentConfig& cfg) {
  ScalarStudy s;
  s.A = cfg.get_double("env.A", s.A);
  s.B = cfg.get_double("env.B", s.B);
  s.s0 = cfg.get_double("env.s0", s.s0);
  s.sigma_r = cfg.get_double("env.sigma_r", s.sigma_r);
  s.T = get_count(cfg, "env.T", s.T, 1);
  if (!(s.sigma_r > 0.0)) throw ConfigError("env.sigma_r", "must be positive");
  return s;
}

void validate_scalar(const ScalarStudy& s) {
  if (!(s.sigma_r > 0.0)) throw ConfigError("env.sigma_r", "must be positive");
  if (s.T < 1) throw ConfigError("env.T", "must be >= 1");
  if (!std::isfinite(s.A) || !std::isfinite(s.B) || !std::isfinite(s.s0))
    throw ConfigError("env", "system parameters must be finite");
}

void require_grid(int points, double lo, double hi, const std::string& name) {
  if (points < 1) throw ConfigError(name + "_points", "must be >= 1");
  if (!(lo <= hi)) throw ConfigError(name + "_min", "must not exceed " + name + "_max");
}

void require_betas(const std::vector<double>& betas, const std::string& key) {
  if (betas.empty()) throw ConfigError(key, "grid must not be empty");
  for (double b : betas)
    if (!(b >= 0.0)) throw ConfigError(key, "entries must be >= 0");
}

std::uint64_t read_seed(const ExperimentConfig& cfg) { return cfg.seed(); }

double max_abs_or_nan(double current, double value) {
  return std::isnan(current) ? std::abs(value) : std::max(current, std::abs(value));
}

Cell cell(int x) { return static_cast<double>(x); }
Cell empty() { return std::monostate{}; }

}  // namespace

// ---------------------------------------------------------------- gradient

GradientStudyConfig GradientStudyConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(merge(
      kScalarEnvKeys, {"study.theta_min", "study.theta_max", "study.theta_points",
                       "study.delta_min", "study.delta_max", "study.delta_points", "study.sweeps",
                       "policy.theta_ref"})));
  GradientStudyConfig c;
  c.system = read_scalar_env(cfg);
  c.theta_min = cfg.get_double("study.theta_min", c.theta_min);
  c.theta_max = cfg.get_double("study.theta_max", c.theta_max);
  c.theta_points = get_count(cfg, "study.theta_points", c.theta_points, 1);
  c.delta_min = cfg.get_double("study.delta_min", c.delta_min);
  c.delta_max = cfg.get_double("study.delta_max", c.delta_max);
  c.delta_points = get_count(cfg, "study.delta_points", c.delta_points, 1);
  if (cfg.has("study.sweeps")) c.sweeps = cfg.get_string_list("study.sweeps");
  if (cfg.has("policy.theta_ref")) c.theta_ref = cfg.get_double("policy.theta_ref");
  c.validate();
  return c;
}

void GradientStudyConfig::validate() const {
  validate_scalar(system);
  require_grid(theta_points, theta_min, theta_max, "study.theta");
  require_grid(delta_points, delta_min, delta_max, "study.delta");
  if (sweeps.empty()) throw ConfigError("study.sweeps", "must not be empty");
  for (const auto& s : sweeps)
    if (s != "dA" && s != "dB") throw ConfigError("study.sweeps", "entries must be dA or dB");
  if (theta_ref && !std::isfinite(*theta_ref))
    throw ConfigError("policy.theta_ref", "must be finite");
}

GradientStudyResult run_gradient_study(const GradientStudyConfig& cfg) {
  cfg.validate();
  const auto& sys = cfg.system;
  const auto thetas = linspace(cfg.theta_min, cfg.theta_max, cfg.theta_points);
  const auto deltas = linspace(cfg.delta_min, cfg.delta_max, cfg.delta_points);
  const double optimum = -sys.A / sys.B;

  GradientStudyResult result;
  for (const auto& sweep : cfg.sweeps) {
    GradientSweepSummary summary;
    summary.sweep = sweep;
    summary.max_abs_d_opc_zero_delta = kNaN;
    summary.max_abs_d_opc_reference = kNaN;
    summary.max_abs_d_opc_optimum = kNaN;
    int raw_ok = 0, opc_ok = 0;
    for (double theta : thetas) {
      for (double delta : deltas) {
        GradientCell c;
        c.sweep = sweep;
        c.theta = theta;
        c.delta = delta;
        const double dA = sweep == "dA" ? delta : 0.0;
        const double dB = sweep == "dB" ? delta : 0.0;
        const double theta_ref = cfg.theta_ref.value_or(theta);
        c.stable = closed_loop_stable(sys.A, 0.0, sys.B, 0.0, theta) &&
                   closed_loop_stable(sys.A, dA, sys.B, dB, theta) &&
                   closed_loop_stable(sys.A, 0.0, sys.B, 0.0, theta_ref);
        if (c.stable) {
          c.g_true = exact_return_gradient_1d(sys, 0.0, 0.0, theta);
          c.g_raw = exact_return_gradient_1d(sys, dA, dB, theta);
          c.g_opc = opc_return_gradient_1d(sys, dA, dB, theta, theta_ref);
          c.d_raw = signed_gradient_distance(c.g_true, c.g_raw);
          c.d_opc = signed_gradient_distance(c.g_true, c.g_opc);
          ++summary.stable_cells;
          raw_ok += c.d_raw >= 0.0;
          opc_ok += c.d_opc >= 0.0;
          if (delta == 0.0)
            summary.max_abs_d_opc_zero_delta = max_abs_or_nan(summary.max_abs_d_opc_zero_delta, c.d_opc);
          if (std::abs(theta - theta_ref) <= 1e-12)
            summary.max_abs_d_opc_reference = max_abs_or_nan(summary.max_abs_d_opc_reference, c.d_opc);
          if (std::abs(theta - optimum) <= 1e-12)
            summary.max_abs_d_opc_optimum = max_abs_or_nan(summary.max_abs_d_opc_optimum, c.d_opc);
        }
        result.cells.push_back(std::move(c));
      }
    }
    if (summary.stable_cells > 0) {
      summary.sign_correct_raw = static_cast<double>(raw_ok) / summary.stable_cells;
      summary.sign_correct_opc = static_cast<double>(opc_ok) / summary.stable_cells;
    }
    result.summaries.push_back(summary);
  }
  return result;
}

ResultTable GradientStudyResult::to_table() const {
  ResultTable table({"sweep", "theta", "delta", "g_true", "g_raw", "g_opc", "d_raw", "d_opc"});
  for (const auto& c : cells) {
    if (c.stable)
      table.add_row({c.sweep, c.theta, c.delta, c.g_true, c.g_raw, c.g_opc, c.d_raw, c.d_opc});
    else
      table.add_row({c.sweep, c.theta, c.delta, empty(), empty(), empty(), empty(), empty()});
  }
  return table;
}

// --------------------------------------------------------------- landscape

LandscapeConfig LandscapeConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(merge(
      kScalarEnvKeys, {"model.dA", "model.dB", "policy.theta_ref", "study.theta_min",
                       "study.theta_max", "study.theta_points"})));
  LandscapeConfig c;
  c.system = read_scalar_env(cfg);
  c.dA = cfg.get_double("model.dA", c.dA);
  c.dB = cfg.get_double("model.dB", c.dB);
  c.theta_ref = cfg.get_double("policy.theta_ref", c.theta_ref);
  c.theta_min = cfg.get_double("study.theta_min", c.theta_min);
  c.theta_max = cfg.get_double("study.theta_max", c.theta_max);
  c.theta_points = get_count(cfg, "study.theta_points", c.theta_points, 1);
  c.validate();
  return c;
}

void LandscapeConfig::validate() const {
  validate_scalar(system);
  require_grid(theta_points, theta_min, theta_max, "study.theta");
  if (!std::isfinite(dA) || !std::isfinite(dB)) throw ConfigError("model", "errors must be finite");
  if (!std::isfinite(theta_ref)) throw ConfigError("policy.theta_ref", "must be finite");
}

LandscapeResult run_landscape(const LandscapeConfig& cfg) {
  cfg.validate();
  LandscapeResult result;
  double best_true = -1.0, best_model = -1.0, best_opc = -1.0;
  for (double theta : linspace(cfg.theta_min, cfg.theta_max, cfg.theta_points)) {
    LandscapeRow row;
    row.theta = theta;
    row.return_true = scalar_return(cfg.system, 0.0, 0.0, theta);
    row.return_model = scalar_return(cfg.system, cfg.dA, cfg.dB, theta);
    row.return_opc = opc_return_1d(cfg.system, cfg.dA, cfg.dB, theta, cfg.theta_ref);
    if (row.return_true > best_true) best_true = row.return_true, result.argmax_true = theta;
    if (row.return_model > best_model) best_model = row.return_model, result.argmax_model = theta;
    if (row.return_opc > best_opc) best_opc = row.return_opc, result.argmax_opc = theta;
    result.rows.push_back(row);
  }
  return result;
}

ResultTable LandscapeResult::to_table() const {
  ResultTable table({"theta", "return_true", "return_model", "return_opc"});
  for (const auto& r : rows) table.add_row({r.theta, r.return_true, r.return_model, r.return_opc});
  return table;
}

// -------------------------------------------------------- double integrator

void DoubleIntegratorSetup::read(const ExperimentConfig& cfg) {
  dt = cfg.get_double("env.dt", dt);
  velocity_noise_var = cfg.get_double("env.velocity_noise_var", velocity_noise_var);
  T = get_count(cfg, "env.T", T, 1);
  dA = cfg.get_matrix("model.dA", 2, 2, dA);
  dB = cfg.get_matrix("model.dB", 2, 1, dB);
  theta = cfg.get_matrix("policy.theta", 1, 2, theta);
  sigma = cfg.get_double("policy.sigma", sigma);
}

void DoubleIntegratorSetup::validate() const {
  if (!(dt > 0.0)) throw ConfigError("env.dt", "must be positive");
  if (!(velocity_noise_var >= 0.0)) throw ConfigError("env.velocity_noise_var", "must be >= 0");
  if (T < 1) throw ConfigError("env.T", "must be >= 1");
  if (dA.rows() != 2 || dA.cols() != 2 || !dA.allFinite())
    throw ConfigError("model.dA", "must be a finite 2x2 matrix");
  if (dB.rows() != 2 || dB.cols() != 1 || !dB.allFinite())
    throw ConfigError("model.dB", "must be a finite 2x1 matrix");
  if (theta.rows() != 1 || theta.cols() != 2 || !theta.allFinite())
    throw ConfigError("policy.theta", "must be a finite 1x2 matrix");
  if (!(sigma >= 0.0)) throw ConfigError("policy.sigma", "must be >= 0");
}

LinearGaussianEnv DoubleIntegratorSetup::env() const {
  return double_integrator(dt, velocity_noise_var, T, 1.0);
}

LearnedLinearModel DoubleIntegratorSetup::model() const {
  const auto e = env();
  LearnedLinearModel m = LearnedLinearModel::exact(e.A(), e.B()).with_injected_error(dA, dB);
  m.noise_cov = e.noise_cov();
  return m;
}

Policy DoubleIntegratorSetup::policy(double beta) const {
  return Policy(theta, Matrix::Constant(1, 1, sigma), beta);
}

namespace {

// Reference rollouts under the reference policy. Sample i uses stream
// base.derive(i), which the environment cloud of every query beta reuses.
ReplayBuffer collect_references(const LinearGaussianEnv& env, const Policy& policy,
                                const RandomStream& base, int samples) {
  ReplayBuffer buffer;
  for (int i = 0; i < samples; ++i) {
    RandomStream stream = base.derive(static_cast<std::uint64_t>(i));
    Trajectory traj = rollout_env(env, policy, stream);
    traj.index = i;
    buffer.add(std::move(traj));
  }
  return buffer;
}

struct Clouds {
  std::vector<Trajectory> env, model, opc;
};

Clouds query_clouds(const DoubleIntegratorSetup& setup, const ReplayBuffer& references,
                    const RandomStream& base, double beta, std::uint64_t seed, int beta_index,
                    bool with_model) {
  const auto env = setup.env();
  const Policy policy = setup.policy(beta);
  const TransitionModel model = setup.model();
  const TransitionModel opc = OpcModel{MeanModel(setup.model()), references.snapshot()};
  RandomStream model_rng = RandomStream(seed, 1).derive(static_cast<std::uint64_t>(beta_index));
  RandomStream opc_rng = RandomStream(seed, 2).derive(static_cast<std::uint64_t>(beta_index));
  Clouds clouds;
  const auto& refs = references.trajectories();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    RandomStream stream = base.derive(i);
    clouds.env.push_back(rollout_env(env, policy, stream));
    const Vector& s0 = refs[i].transitions.front().state;
    if (with_model)
      clouds.model.push_back(model_rollout(model, policy, env.task(), s0, setup.T, model_rng));
    clouds.opc.push_back(
        model_rollout(opc, policy, env.task(), s0, setup.T, opc_rng, 0, static_cast<int>(i)));
    if (clouds.opc.back().size() != static_cast<std::size_t>(setup.T))
      throw Error("OPC rollout ended before the horizon");
  }
  return clouds;
}

std::vector<double> marginal(const std::vector<std::vector<Vector>>& states, int t, int dim) {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& path : states) out.push_back(path[static_cast<std::size_t>(t)](dim));
  return out;
}

std::vector<std::vector<Vector>> all_states(const std::vector<Trajectory>& cloud) {
  std::vector<std::vector<Vector>> out;
  out.reserve(cloud.size());
  for (const auto& traj : cloud) out.push_back(traj.states());
  return out;
}

}  // namespace

// ------------------------------------------------------------- state_dist

StateDistConfig StateDistConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(merge(kDoubleIntegratorKeys, {"policy.reference_beta",
                                                              "policy.betas", "study.samples"})));
  StateDistConfig c;
  c.setup.read(cfg);
  c.reference_beta = cfg.get_double("policy.reference_beta", c.reference_beta);
  c.betas = cfg.get_list("policy.betas", c.betas);
  c.samples = get_count(cfg, "study.samples", c.samples, 1);
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void StateDistConfig::validate() const {
  setup.validate();
  if (!(reference_beta >= 0.0)) throw ConfigError("policy.reference_beta", "must be >= 0");
  require_betas(betas, "policy.betas");
  if (samples < 1) throw ConfigError("study.samples", "must be >= 1");
}

StateDistResult run_state_dist(const StateDistConfig& cfg) {
  cfg.validate();
  const auto env = cfg.setup.env();
  const RandomStream base(cfg.seed, 0);
  const ReplayBuffer references =
      collect_references(env, cfg.setup.policy(cfg.reference_beta), base, cfg.samples);
  StateDistResult result;
  for (std::size_t k = 0; k < cfg.betas.size(); ++k) {
    const double beta = cfg.betas[k];
    const Clouds clouds =
        query_clouds(cfg.setup, references, base, beta, cfg.seed, static_cast<int>(k), true);
    const auto env_states = all_states(clouds.env);
    const auto model_states = all_states(clouds.model);
    const auto opc_states = all_states(clouds.opc);
    for (int dim = 0; dim < 2; ++dim) {
      StateDistSummary summary{beta, dim, 0.0, 0.0};
      for (int t = 0; t <= cfg.setup.T; ++t) {
        const auto e = marginal(env_states, t, dim);
        StateDistRow row{beta, t, dim, 0.0, 0.0};
        row.w1_model = wasserstein1_empirical(e, marginal(model_states, t, dim));
        row.w1_opc = wasserstein1_empirical(e, marginal(opc_states, t, dim));
        summary.mean_w1_model += row.w1_model;
        summary.mean_w1_opc += row.w1_opc;
        result.rows.push_back(row);
      }
      summary.mean_w1_model /= cfg.setup.T + 1;
      summary.mean_w1_opc /= cfg.setup.T + 1;
      result.summaries.push_back(summary);
    }
  }
  return result;
}

ResultTable StateDistResult::to_table() const {
  ResultTable table({"beta", "t", "dim", "w1_env_vs_model", "w1_env_vs_opc"});
  for (const auto& r : rows) table.add_row({r.beta, cell(r.t), cell(r.dim), r.w1_model, r.w1_opc});
  return table;
}

// ------------------------------------------------------------- off_policy

OffPolicyConfig OffPolicyConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(merge(kDoubleIntegratorKeys, {"policy.reference_beta",
                                                              "policy.betas", "study.samples"})));
  OffPolicyConfig c;
  c.setup.read(cfg);
  c.reference_beta = cfg.get_double("policy.reference_beta", c.reference_beta);
  c.betas = cfg.get_list("policy.betas", c.betas);
  c.samples = get_count(cfg, "study.samples", c.samples, 1);
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void OffPolicyConfig::validate() const {
  setup.validate();
  if (!(reference_beta >= 0.0)) throw ConfigError("policy.reference_beta", "must be >= 0");
  require_betas(betas, "policy.betas");
  if (samples < 1) throw ConfigError("study.samples", "must be >= 1");
}

OffPolicyResult run_off_policy(const OffPolicyConfig& cfg) {
  cfg.validate();
  const auto env = cfg.setup.env();
  const RandomStream base(cfg.seed, 0);
  const ReplayBuffer references =
      collect_references(env, cfg.setup.policy(cfg.reference_beta), base, cfg.samples);
  OffPolicyResult result;
  std::vector<double> errors;
  for (std::size_t k = 0; k < cfg.betas.size(); ++k) {
    const Clouds clouds = query_clouds(cfg.setup, references, base, cfg.betas[k], cfg.seed,
                                       static_cast<int>(k), false);
    OffPolicyRow row;
    row.beta = cfg.betas[k];
    for (std::size_t i = 0; i < clouds.env.size(); ++i) {
      row.return_env += discounted_return(clouds.env[i], env.gamma(), Averaging::Sum);
      row.return_opc += discounted_return(clouds.opc[i], env.gamma(), Averaging::Sum);
    }
    row.return_env /= static_cast<double>(clouds.env.size());
    row.return_opc /= static_cast<double>(clouds.opc.size());
    row.abs_error = std::abs(row.return_opc - row.return_env);
    errors.push_back(row.abs_error);
    result.rows.push_back(row);
  }
  result.rank_correlation =
      cfg.betas.size() >= 2 ? spearman_correlation(cfg.betas, errors) : kNaN;
  return result;
}

ResultTable OffPolicyResult::to_table() const {
  ResultTable table({"beta", "return_opc_predicted", "return_env", "abs_error"});
  for (const auto& r : rows) table.add_row({r.beta, r.return_opc, r.return_env, r.abs_error});
  return table;
}

// ----------------------------------------------------------------- lemma1

Lemma1Config Lemma1Config::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(
      merge(kDoubleIntegratorKeys, {"study.B_grid", "study.trials", "study.epsilon"})));
  Lemma1Config c;
  c.setup.read(cfg);
  if (cfg.has("study.B_grid")) {
    c.B_grid.clear();
    for (double b : cfg.get_list("study.B_grid")) {
      if (b != std::floor(b) || b < 1 || b > 1e7)
        throw ConfigError("study.B_grid", "entries must be positive integers");
      c.B_grid.push_back(static_cast<int>(b));
    }
  }
  c.trials = get_count(cfg, "study.trials", c.trials, 1);
  if (cfg.has("study.epsilon")) c.epsilon = cfg.get_double("study.epsilon");
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void Lemma1Config::validate() const {
  setup.validate();
  if (B_grid.empty()) throw ConfigError("study.B_grid", "must not be empty");
  for (int b : B_grid)
    if (b < 1) throw ConfigError("study.B_grid", "entries must be >= 1");
  if (trials < 1) throw ConfigError("study.trials", "must be >= 1");
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("study.epsilon", "must be positive");
}

Lemma1StudyResult run_lemma1(const Lemma1Config& cfg) {
  cfg.validate();
  RandomStream rng(cfg.seed, 0);
  Lemma1StudyResult result;
  result.study = lemma1_convergence_study(cfg.setup.env(), MeanModel(cfg.setup.model()),
                                          Policy(cfg.setup.theta), cfg.B_grid, cfg.trials,
                                          Averaging::Sum, rng, cfg.epsilon);
  std::vector<double> x, y;
  for (const auto& row : result.study.rows) {
    if (row.estimator_variance > 0.0) {
      x.push_back(std::log(static_cast<double>(row.B)));
      y.push_back(std::log(row.estimator_variance));
    }
  }
  result.variance_slope = kNaN;
  if (x.size() >= 2) {
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx > 0.0) result.variance_slope = sxy / sxx;
  }
  return result;
}

ResultTable Lemma1StudyResult::to_table() const {
  ResultTable table({"B", "mean_abs_error", "tail_probability", "estimator_variance",
                     "true_return", "epsilon"});
  for (const auto& r : study.rows)
    table.add_row({cell(r.B), r.mean_abs_error, r.tail_probability, r.estimator_variance,
                   study.true_return, study.epsilon});
  return table;
}

// ------------------------------------------------------------ bound_check

BoundCheckConfig BoundCheckConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common({"study.configurations", "study.rollouts", "study.max_T",
                                 "study.deterministic_every"}));
  BoundCheckConfig c;
  c.configurations = get_count(cfg, "study.configurations", c.configurations, 1);
  c.rollouts = get_count(cfg, "study.rollouts", c.rollouts, 1);
  c.max_T = get_count(cfg, "study.max_T", c.max_T, 1);
  c.deterministic_every = get_count(cfg, "study.deterministic_every", c.deterministic_every, 0);
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void BoundCheckConfig::validate() const {
  if (configurations < 1) throw ConfigError("study.configurations", "must be >= 1");
  if (rollouts < 1) throw ConfigError("study.rollouts", "must be >= 1");
  if (max_T < 1) throw ConfigError("study.max_T", "must be >= 1");
  if (deterministic_every < 0) throw ConfigError("study.deterministic_every", "must be >= 0");
}

namespace {

Matrix uniform_matrix(RandomStream& rng, Eigen::Index rows, Eigen::Index cols, double lo,
                      double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = lo + (hi - lo) * rng.uniform();
  return m;
}

}  // namespace

BoundCheckResult run_bound_check(const BoundCheckConfig& cfg) {
  cfg.validate();
  const RandomStream base(cfg.seed, 0);
  BoundCheckResult result;
  for (int c = 0; c < cfg.configurations; ++c) {
    RandomStream rng = base.derive(static_cast<std::uint64_t>(c));
    BoundCheckRow row;
    row.configuration = c;
    row.n_s = static_cast<int>(1 + rng.uniform_index(2));
    row.T = static_cast<int>(rng.uniform_int(1, cfg.max_T));
    row.gamma = 0.5 + 0.45 * rng.uniform();
    row.sigma_r = 0.5 + 1.5 * rng.uniform();
    const Eigen::Index n = row.n_s;
    const Matrix A = uniform_matrix(rng, n, n, -0.8, 0.8);
    const Matrix B = uniform_matrix(rng, n, 1, -1.0, 1.0);
    const Matrix noise = uniform_matrix(rng, n, 1, 0.01, 0.1).col(0).asDiagonal();
    const Vector init_mean = uniform_matrix(rng, n, 1, -1.0, 1.0).col(0);
    const Matrix init_cov = 0.05 * Matrix::Identity(n, n);
    const LearnedLinearModel f = LearnedLinearModel::exact(A, B).with_injected_error(
        uniform_matrix(rng, n, n, -0.2, 0.2), uniform_matrix(rng, n, 1, -0.2, 0.2));
    const Matrix theta = uniform_matrix(rng, 1, n, -1.0, 1.0);
    const Matrix sigma = uniform_matrix(rng, 1, 1, 0.05, 0.5);
    const bool deterministic = cfg.deterministic_every > 0 && c % cfg.deterministic_every == 0;
    const double beta_draw = 0.5 + 1.5 * rng.uniform();
    row.beta = deterministic ? 0.0 : beta_draw;

    const Task task{RewardSpec::bell(row.sigma_r), std::nullopt};
    const LinearGaussianEnv env(A, B, noise, init_mean, init_cov, row.T, row.gamma, task);
    const Policy policy(theta, sigma, row.beta);
    RandomStream mc = rng.derive(1);
    row.lhs = generalized_opc_gap(env, MeanModel(f), policy, cfg.rollouts, Averaging::Sum, mc).gap;
    row.profile = lipschitz_profile_linear(f, policy, task.reward, std::nullopt, row.gamma, row.T);
    row.rhs = theorem1_rhs(row.profile);
    row.holds = row.lhs <= row.rhs;
    result.rows.push_back(row);
  }
  return result;
}

ResultTable BoundCheckResult::to_table() const {
  ResultTable table({"configuration", "n_s", "T", "gamma", "beta", "sigma_r", "L_f", "L_r", "L_pi",
                     "sigma_pi_bar", "lhs", "rhs", "holds"});
  for (const auto& r : rows)
    table.add_row({cell(r.configuration), cell(r.n_s), cell(r.T), r.gamma, r.beta, r.sigma_r,
                   r.profile.L_f, r.profile.L_r, r.profile.L_pi, r.profile.sigma_pi_bar, r.lhs,
                   r.rhs, cell(r.holds ? 1 : 0)});
  return table;
}

// -------------------------------------------------------------- ilc_equiv

IlcEquivConfig IlcEquivConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common({"study.instances", "study.max_state_dim", "study.max_action_dim",
                                 "study.max_T", "study.perturbations",
                                 "study.perturbation_scale"}));
  IlcEquivConfig c;
  c.instances = get_count(cfg, "study.instances", c.instances, 1);
  c.max_state_dim = get_count(cfg, "study.max_state_dim", c.max_state_dim, 1);
  c.max_action_dim = get_count(cfg, "study.max_action_dim", c.max_action_dim, 1);
  c.max_T = get_count(cfg, "study.max_T", c.max_T, 1);
  c.perturbations = get_count(cfg, "study.perturbations", c.perturbations, 0);
  c.perturbation_scale = cfg.get_double("study.perturbation_scale", c.perturbation_scale);
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void IlcEquivConfig::validate() const {
  if (instances < 1) throw ConfigError("study.instances", "must be >= 1");
  if (max_state_dim < 1) throw ConfigError("study.max_state_dim", "must be >= 1");
  if (max_action_dim < 1) throw ConfigError("study.max_action_dim", "must be >= 1");
  if (max_T < 1) throw ConfigError("study.max_T", "must be >= 1");
  if (perturbations < 0) throw ConfigError("study.perturbations", "must be >= 0");
  if (!(perturbation_scale > 0.0)) throw ConfigError("study.perturbation_scale", "must be positive");
}

IlcEquivResult run_ilc_equiv(const IlcEquivConfig& cfg) {
  cfg.validate();
  const RandomStream base(cfg.seed, 0);
  IlcEquivResult result;
  for (int k = 0; k < cfg.instances; ++k) {
    RandomStream rng = base.derive(static_cast<std::uint64_t>(k));
    IlcEquivRow row;
    row.instance = k;
    row.n_s = static_cast<int>(rng.uniform_int(1, cfg.max_state_dim));
    row.n_a = static_cast<int>(rng.uniform_int(1, cfg.max_action_dim));
    row.T = static_cast<int>(rng.uniform_int(1, cfg.max_T));
    const Matrix A = uniform_matrix(rng, row.n_s, row.n_s, -1.0, 1.0) / std::sqrt(row.n_s);
    const Matrix B = uniform_matrix(rng, row.n_s, row.n_a, -1.0, 1.0);
    const auto sys = build_lifted<double>(A, B, row.T);
    const Eigen::Index nu = sys.F.cols(), ns = sys.F.rows();
    const Matrix C = uniform_matrix(rng, nu, 1, 0.1, 2.0).col(0).asDiagonal();
    const Vector u = rng.normal_vector(nu);
    const Vector s = sys.F * u + rng.normal_vector(ns);
    const Vector reference = rng.normal_vector(ns);
    const Matrix M = Matrix::Identity(ns, ns);

    const Vector u_mbrl = mbrl_closed_form<double>(reference, s, u, sys, C);
    const Vector u_ilc = noilc_update<double>(u, reference - s, sys, M, C);
    row.relative_deviation =
        (u_mbrl - u_ilc).norm() / std::max(u_ilc.norm(), std::numeric_limits<double>::min());

    const Vector e = reference - s;
    const Vector du = u_ilc - u;
    const double best = ilc_objective<double>(e, du, sys, M, C);
    for (int p = 0; p < cfg.perturbations; ++p) {
      const Vector delta = cfg.perturbation_scale * rng.normal_vector(nu);
      row.perturbations_beaten += best <= ilc_objective<double>(e, du + delta, sys, M, C);
    }
    result.max_relative_deviation = std::max(result.max_relative_deviation, row.relative_deviation);
    result.all_perturbations_beaten =
        result.all_perturbations_beaten && row.perturbations_beaten == cfg.perturbations;
    result.rows.push_back(row);
  }
  return result;
}

ResultTable IlcEquivResult::to_table() const {
  ResultTable table({"instance", "n_s", "n_a", "T", "relative_deviation", "perturbations_beaten"});
  for (const auto& r : rows)
    table.add_row({cell(r.instance), cell(r.n_s), cell(r.n_a), cell(r.T), r.relative_deviation,
                   cell(r.perturbations_beaten)});
  return table;
}

// -------------------------------------------------------------- mbrl_loop

MbrlStudyConfig MbrlStudyConfig::from_config(const ExperimentConfig& cfg) {
  cfg.require_known(with_common(merge(
      kScalarEnvKeys,
      {"model.dA", "model.dB", "policy.theta0", "study.iterations", "study.horizon",
       "study.budget", "study.improver", "study.step_size", "study.trust_region", "study.runs",
       "study.oracle_min", "study.oracle_max", "study.oracle_points"})));
  MbrlStudyConfig c;
  c.system = read_scalar_env(cfg);
  c.dA = cfg.get_double("model.dA", c.dA);
  c.dB = cfg.get_double("model.dB", c.dB);
  c.theta0 = cfg.get_double("policy.theta0", c.theta0);
  c.iterations = get_count(cfg, "study.iterations", c.iterations, 1);
  c.horizon = get_count(cfg, "study.horizon", c.system.T, 1);
  c.budget = get_count(cfg, "study.budget", c.horizon, 1);
  const std::string improver = cfg.get_string("study.improver", "sign_step");
  if (improver == "sign_step")
    c.improver = ImproverKind::SignStep;
  else if (improver == "clipped_gradient")
    c.improver = ImproverKind::ClippedGradient;
  else
    throw ConfigError("study.improver", "must be sign_step or clipped_gradient");
  c.settings.step_size = cfg.get_double("study.step_size", c.settings.step_size);
  c.settings.trust_region = cfg.get_double("study.trust_region", c.settings.trust_region);
  if (cfg.has("study.runs")) c.runs = cfg.get_string_list("study.runs");
  c.oracle_min = cfg.get_double("study.oracle_min", c.oracle_min);
  c.oracle_max = cfg.get_double("study.oracle_max", c.oracle_max);
  c.oracle_points = get_count(cfg, "study.oracle_points", c.oracle_points, 1);
  c.seed = read_seed(cfg);
  c.validate();
  return c;
}

void MbrlStudyConfig::validate() const {
  validate_scalar(system);
  if (!std::isfinite(dA) || !std::isfinite(dB)) throw ConfigError("model", "errors must be finite");
  if (system.B + dB == 0.0) throw ConfigError("model.dB", "model input gain must be nonzero");
  if (!std::isfinite(theta0)) throw ConfigError("policy.theta0", "must be finite");
  if (iterations < 1) throw ConfigError("study.iterations", "must be >= 1");
  if (horizon < 1 || horizon > system.T) throw ConfigError("study.horizon", "must lie in [1, T]");
  if (budget < 1) throw ConfigError("study.budget", "must be >= 1");
  if (!(settings.step_size > 0.0)) throw ConfigError("study.step_size", "must be positive");
  if (!(settings.trust_region > 0.0)) throw ConfigError("study.trust_region", "must be positive");
  if (runs.empty()) throw ConfigError("study.runs", "must not be empty");
  for (const auto& r : runs)
    if (r != "opc" && r != "plain" && r != "replay")
      throw ConfigError("study.runs", "entries must be opc, plain or replay");
  require_grid(oracle_points, oracle_min, oracle_max, "study.oracle");
}

MbrlStudyResult run_mbrl_loop(const MbrlStudyConfig& cfg) {
  cfg.validate();
  const auto& sys = cfg.system;
  const auto env = scalar_env(sys.A, sys.B, sys.s0, sys.sigma_r, sys.T, 1.0);
  MbrlStudyResult result;
  result.theta_star = -sys.A / sys.B;
  double best = -1.0;
  for (double theta : linspace(cfg.oracle_min, cfg.oracle_max, cfg.oracle_points)) {
    const double value = scalar_return(sys, cfg.dA, cfg.dB, theta);
    if (value > best) best = value, result.theta_star_model = theta;
  }
  const RandomStream base(cfg.seed, 0);
  for (std::size_t k = 0; k < cfg.runs.size(); ++k) {
    MbrlConfig mc;
    mc.iterations = cfg.iterations;
    mc.kind = cfg.runs[k] == "opc"     ? ModelKind::Opc
              : cfg.runs[k] == "plain" ? ModelKind::Learned
                                       : ModelKind::Replay;
    mc.source = ModelSource::Fixed;
    mc.fixed_model = LearnedLinearModel::exact(Matrix::Constant(1, 1, sys.A),
                                               Matrix::Constant(1, 1, sys.B));
    mc.dA = Matrix::Constant(1, 1, cfg.dA);
    mc.dB = Matrix::Constant(1, 1, cfg.dB);
    mc.horizon = cfg.horizon;
    mc.budget = cfg.budget;
    mc.averaging = Averaging::Mean;
    mc.improver = cfg.improver;
    mc.settings = cfg.settings;
    RandomStream rng = base.derive(k);
    Policy final_policy;
    MbrlRun run;
    run.name = cfg.runs[k];
    run.records = mbrl_loop(env, mc, Policy(Matrix::Constant(1, 1, cfg.theta0)), rng, &final_policy);
    run.final_theta = final_policy.theta()(0, 0);
    result.runs.push_back(std::move(run));
  }
  return result;
}

ResultTable MbrlStudyResult::to_table() const {
  ResultTable table({"run", "iteration", "theta", "true_return", "model_return", "flagged",
                     "sim_transitions"});
  for (const auto& run : runs)
    for (const auto& r : run.records)
      table.add_row({run.name, cell(r.iteration), r.theta(0, 0), r.true_return, r.model_return,
                     cell(r.flagged ? 1 : 0), cell(static_cast<int>(r.sim_transitions))});
  return table;
}

// --------------------------------------------------------------- dispatch

const std::vector<std::string>& study_names() {
  static const std::vector<std::string> names{"gradient",    "landscape",   "state_dist",
                                              "off_policy",  "lemma1",      "bound_check",
                                              "ilc_equiv",   "mbrl_loop"};
  return names;
}

ResultTable run_study(const std::string& subcommand, const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.seed();
  if (cfg.has("experiment.subcommand") && cfg.get_string("experiment.subcommand") != subcommand)
    throw ConfigError("experiment.subcommand", "config is for '" +
                                                   cfg.get_string("experiment.subcommand") +
                                                   "', not '" + subcommand + "'");
  ResultTable table({"_"});
  if (subcommand == "gradient")
    table = run_gradient_study(GradientStudyConfig::from_config(cfg)).to_table();
  else if (subcommand == "landscape")
    table = run_landscape(LandscapeConfig::from_config(cfg)).to_table();
  else if (subcommand == "state_dist")
    table = run_state_dist(StateDistConfig::from_config(cfg)).to_table();
  else if (subcommand == "off_policy")
    table = run_off_policy(OffPolicyConfig::from_config(cfg)).to_table();
  else if (subcommand == "lemma1")
    table = run_lemma1(Lemma1Config::from_config(cfg)).to_table();
  else if (subcommand == "bound_check")
    table = run_bound_check(BoundCheckConfig::from_config(cfg)).to_table();
  else if (subcommand == "ilc_equiv")
    table = run_ilc_equiv(IlcEquivConfig::from_config(cfg)).to_table();
  else if (subcommand == "mbrl_loop")
    table = run_mbrl_loop(MbrlStudyConfig::from_config(cfg)).to_table();
  else
    throw ConfigError("subcommand", "unknown subcommand '" + subcommand + "'");
  table.set_provenance(cfg.hash(), seed);
  return table;
}

}  // namespace opclab

#pragma once

#include "opclab/analysis.hpp"
#include "opclab/config.hpp"
#include "opclab/results.hpp"
#include "opclab/scalar_study.hpp"

#include <optional>
#include <string>
#include <vector>

namespace opclab {

/// n evenly spaced points from lo to hi inclusive (lo + (hi - lo) i / (n - 1)).
std::vector<double> linspace(double lo, double hi, int n);

// Signed gradient distance over (theta, dA) and (theta, dB) grids.

struct GradientStudyConfig {
  ScalarStudy system;
  double theta_min = -2.0;
  double theta_max = 0.0;
  int theta_points = 101;
  double delta_min = -1.0;
  double delta_max = 1.0;
  int delta_points = 81;
  std::vector<std::string> sweeps{"dA", "dB"};
  /// Reference policy of the OPC data; unset means on-policy (theta_ref = theta).
  std::optional<double> theta_ref;

  static GradientStudyConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct GradientCell {
  std::string sweep;
  double theta = 0.0;
  double delta = 0.0;
  bool stable = false;
  double g_true = 0.0;
  double g_raw = 0.0;
  double g_opc = 0.0;
  double d_raw = 0.0;
  double d_opc = 0.0;
};

struct GradientSweepSummary {
  std::string sweep;
  int stable_cells = 0;
  /// Fraction of stable cells with d >= 0.
  double sign_correct_raw = 0.0;
  double sign_correct_opc = 0.0;
  /// max |d_opc| over stable cells with delta = 0, theta = theta_ref and
  /// theta = -A/B respectively (NaN when no such cell exists).
  double max_abs_d_opc_zero_delta = 0.0;
  double max_abs_d_opc_reference = 0.0;
  double max_abs_d_opc_optimum = 0.0;
};

struct GradientStudyResult {
  std::vector<GradientCell> cells;
  std::vector<GradientSweepSummary> summaries;
  ResultTable to_table() const;
};

GradientStudyResult run_gradient_study(const GradientStudyConfig& cfg);

// Return landscapes of the true system, the biased model and OPC.

struct LandscapeConfig {
  ScalarStudy system;
  double dA = 0.5;
  double dB = 0.0;
  double theta_ref = -0.5;
  double theta_min = -2.0;
  double theta_max = 0.0;
  int theta_points = 101;

  static LandscapeConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct LandscapeRow {
  double theta = 0.0;
  double return_true = 0.0;
  double return_model = 0.0;
  double return_opc = 0.0;
};

struct LandscapeResult {
  std::vector<LandscapeRow> rows;
  double argmax_true = 0.0;
  double argmax_model = 0.0;
  double argmax_opc = 0.0;
  ResultTable to_table() const;
};

LandscapeResult run_landscape(const LandscapeConfig& cfg);

// Double-integrator settings shared by the stochastic studies.

struct DoubleIntegratorSetup {
  double dt = 0.1;
  double velocity_noise_var = 0.01;
  int T = 30;
  Matrix dA = 0.05 * Matrix::Identity(2, 2);
  Matrix dB = Matrix::Zero(2, 1);
  Matrix theta = Matrix::Constant(1, 2, -1.0);
  double sigma = 0.25;  // policy noise variance before the beta multiplier

  void read(const ExperimentConfig& cfg);
  void validate() const;
  LinearGaussianEnv env() const;
  /// Biased mean model with the environment noise covariance.
  LearnedLinearModel model() const;
  Policy policy(double beta) const;
};

// Per-dimension W1 between env, model and OPC state clouds over time.

struct StateDistConfig {
  DoubleIntegratorSetup setup;
  double reference_beta = 1.0;
  std::vector<double> betas{1.0, 1.5};
  int samples = 2000;
  std::uint64_t seed = 0;

  static StateDistConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct StateDistRow {
  double beta = 0.0;
  int t = 0;
  int dim = 0;
  double w1_model = 0.0;
  double w1_opc = 0.0;
};

struct StateDistSummary {
  double beta = 0.0;
  int dim = 0;
  /// Averages over t = 0..T.
  double mean_w1_model = 0.0;
  double mean_w1_opc = 0.0;
};

struct StateDistResult {
  std::vector<StateDistRow> rows;
  std::vector<StateDistSummary> summaries;
  ResultTable to_table() const;
};

StateDistResult run_state_dist(const StateDistConfig& cfg);

// OPC return prediction as the query policy becomes more stochastic.

struct OffPolicyConfig {
  DoubleIntegratorSetup setup;
  double reference_beta = 1.0;
  std::vector<double> betas{1.0, 1.5, 2.0, 2.5};
  int samples = 2000;
  std::uint64_t seed = 0;

  static OffPolicyConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct OffPolicyRow {
  double beta = 0.0;
  double return_opc = 0.0;
  double return_env = 0.0;
  double abs_error = 0.0;
};

struct OffPolicyResult {
  std::vector<OffPolicyRow> rows;
  /// Spearman correlation between beta and abs_error.
  double rank_correlation = 0.0;
  ResultTable to_table() const;
};

OffPolicyResult run_off_policy(const OffPolicyConfig& cfg);

// Convergence of the OPC return estimate in the number of references.

struct Lemma1Config {
  DoubleIntegratorSetup setup;
  std::vector<int> B_grid{4, 16, 64, 256};
  int trials = 200;
  std::optional<double> epsilon;
  std::uint64_t seed = 0;

  static Lemma1Config from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct Lemma1StudyResult {
  Lemma1Result study;
  /// Least-squares slope of log(variance) against log(B).
  double variance_slope = 0.0;
  ResultTable to_table() const;
};

Lemma1StudyResult run_lemma1(const Lemma1Config& cfg);

// Generalized OPC gap against the bound on random linear-Gaussian problems.

struct BoundCheckConfig {
  int configurations = 20;
  int rollouts = 10000;
  int max_T = 6;
  /// Every k-th configuration (starting with the first) uses beta = 0.
  int deterministic_every = 4;
  std::uint64_t seed = 0;

  static BoundCheckConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct BoundCheckRow {
  int configuration = 0;
  int n_s = 0;
  int T = 0;
  double gamma = 0.0;
  double beta = 0.0;
  double sigma_r = 0.0;
  LipschitzProfile profile;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

struct BoundCheckResult {
  std::vector<BoundCheckRow> rows;
  ResultTable to_table() const;
};

BoundCheckResult run_bound_check(const BoundCheckConfig& cfg);

// NO-ILC update against the MBRL closed form on random lifted systems.

struct IlcEquivConfig {
  int instances = 50;
  int max_state_dim = 3;
  int max_action_dim = 3;
  int max_T = 8;
  int perturbations = 100;
  double perturbation_scale = 1e-2;
  std::uint64_t seed = 0;

  static IlcEquivConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct IlcEquivRow {
  int instance = 0;
  int n_s = 0;
  int n_a = 0;
  int T = 0;
  double relative_deviation = 0.0;
  int perturbations_beaten = 0;
};

struct IlcEquivResult {
  std::vector<IlcEquivRow> rows;
  double max_relative_deviation = 0.0;
  bool all_perturbations_beaten = true;
  ResultTable to_table() const;
};

IlcEquivResult run_ilc_equiv(const IlcEquivConfig& cfg);

// Model-based RL loop on the scalar system with OPC and plain models.

struct MbrlStudyConfig {
  ScalarStudy system;
  double dA = 0.5;
  double dB = 0.0;
  double theta0 = -0.2;
  int iterations = 30;
  int horizon = 60;
  int budget = 60;
  ImproverKind improver = ImproverKind::SignStep;
  ImproveSettings settings;
  std::vector<std::string> runs{"opc", "plain"};
  /// Grid for the argmax oracle of the biased model's return.
  double oracle_min = -3.0;
  double oracle_max = 1.0;
  int oracle_points = 4001;
  std::uint64_t seed = 0;

  static MbrlStudyConfig from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct MbrlRun {
  std::string name;
  std::vector<MbrlRecord> records;
  double final_theta = 0.0;
};

struct MbrlStudyResult {
  std::vector<MbrlRun> runs;
  double theta_star = 0.0;        // -A/B
  double theta_star_model = 0.0;  // grid argmax of the biased model's return
  ResultTable to_table() const;
};

MbrlStudyResult run_mbrl_loop(const MbrlStudyConfig& cfg);

/// Subcommand names in CLI order.
const std::vector<std::string>& study_names();

/// Validate `cfg` for `subcommand` and run it. Config problems raise
/// ConfigError before any work; the table carries the provenance footer.
ResultTable run_study(const std::string& subcommand, const ExperimentConfig& cfg);

}  // namespace opclab

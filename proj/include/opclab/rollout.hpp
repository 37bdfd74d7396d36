#pragma once

#include "opclab/models.hpp"

#include <optional>
#include <vector>

namespace opclab {

/// One sample from `model` at (s, a). `t` and `b` index the reference
/// trajectory for replay/OPC models and the offset for time-offset models.
/// Learned models add N(0, noise_cov); ensembles pick a member uniformly per
/// call. Returns nullopt when the model has no reference data for (t, b).
std::optional<Vector> model_next(const TransitionModel& model, const Vector& s, const Vector& a,
                                 int t, int b, RandomStream& rng);

/// Roll `model` for up to H steps from s0 starting at time t0. Transition
/// time indices are absolute (t0, t0 + 1, ...). Running out of reference
/// data or reaching a terminal state ends the rollout early.
Trajectory model_rollout(const TransitionModel& model, const Policy& policy, const Task& task,
                         const Vector& s0, int H, RandomStream& rng, int t0 = 0, int b = 0);

struct BranchedRolloutConfig {
  int horizon = 1;  // H
  int budget = 1;   // N
  /// Stop a branch when the reference next state is terminal. Defaults to
  /// on for OPC models when unset.
  std::optional<bool> reference_termination;
};

struct SimTransition {
  int branch = 0;
  int source_t = 0;
  int source_b = 0;
  int step = 0;
  Vector state;
  Vector action;
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;
};

struct SimBuffer {
  std::vector<SimTransition> transitions;
  std::size_t pre_truncation_size = 0;
  int branches = 0;
  std::size_t size() const { return transitions.size(); }
};

/// A single branch starting from the recorded state s_ref_{t0} of
/// trajectory b. Actions are drawn from `policy` with `rng`, followed by
/// the model sample (same stream).
std::vector<SimTransition> run_branch(const TransitionModel& model, const BufferSnapshot& reference,
                                      const Policy& policy, const Task& task, int H, int t0,
                                      int b, bool reference_termination, RandomStream& rng,
                                      int branch_id = 0);

/// Branched rollout scheme. Repeats until the budget is met: b ~ U{0..B-1}
/// and t ~ U{0..len_b - H} from `rng`, then runs the branch on
/// rng.derive(branch index). The last branch runs to completion and the
/// buffer is then truncated to exactly N transitions.
SimBuffer branched_rollouts(const TransitionModel& model, const BufferSnapshot& reference,
                            const Policy& policy, const Task& task,
                            const BranchedRolloutConfig& cfg, RandomStream& rng);

/// Start of one surrogate branch: reference indices, start state and the
/// standard-normal action noise for every step (held fixed across theta).
struct BranchStart {
  int t = 0;
  int b = 0;
  Vector state;
  std::vector<Vector> action_noise;
};

/// Branch starts of a SimBuffer in branch order, with fresh action noise.
std::vector<BranchStart> branch_starts(const SimBuffer& sim, const BufferSnapshot& reference,
                                       const Policy& policy, int H, RandomStream& rng);

/// Model-based surrogate return over a fixed set of branch starts, as a
/// function of the policy gain. Learned and ensemble models roll their mean
/// dynamics; OPC models use the recorded references. gradient() is the
/// exact pathwise derivative for these affine models (forward sensitivity
/// through the closed loop).
class SurrogateReturn {
 public:
  SurrogateReturn(TransitionModel model, BufferSnapshot reference, Task task, Policy policy, int H,
                  double gamma, Averaging averaging, std::vector<BranchStart> starts);

  double value(const Matrix& theta) const;
  Matrix gradient(const Matrix& theta) const;

 private:
  double branch(const BranchStart& start, const Matrix& theta, Matrix* grad) const;

  TransitionModel model_;
  BufferSnapshot reference_;
  Task task_;
  Policy policy_;
  int H_;
  double gamma_;
  Averaging averaging_;
  std::vector<BranchStart> starts_;
};

enum class ModelKind { Replay, Learned, Opc };
enum class ModelSource { Fixed, LeastSquares };
enum class ImproverKind { ClippedGradient, SignStep };

struct MbrlConfig {
  int iterations = 30;
  int rollouts_per_iteration = 1;  // B
  int retain = 1;                  // K
  ModelKind kind = ModelKind::Opc;
  ModelSource source = ModelSource::Fixed;
  /// Used when source is Fixed. Injected errors are applied on top of
  /// either source.
  LearnedLinearModel fixed_model;
  Matrix dA;
  Matrix dB;
  double ridge = 0.0;
  int horizon = 1;  // H; clamped to the shortest reference trajectory
  int budget = 1;   // N
  Averaging averaging = Averaging::Sum;
  ImproverKind improver = ImproverKind::SignStep;
  ImproveSettings settings;
  double divergence_guard = 1e6;
};

struct MbrlRecord {
  int iteration = 0;
  Matrix theta;
  double true_return = 0.0;
  double model_return = 0.0;
  bool flagged = false;
  std::size_t sim_transitions = 0;
};

/// Model-based RL loop: collect B environment rollouts with the current
/// policy, refresh the model, generate branched simulated data, and take one
/// improvement step on the surrogate return built from those branches.
/// A policy whose environment states exceed `divergence_guard` is flagged
/// and replaced by the previous policy. The policy after the last update is
/// stored in `final_policy` when given.
std::vector<MbrlRecord> mbrl_loop(const LinearGaussianEnv& env, const MbrlConfig& cfg,
                                  const Policy& policy0, RandomStream& rng,
                                  Policy* final_policy = nullptr);

}  // namespace opclab

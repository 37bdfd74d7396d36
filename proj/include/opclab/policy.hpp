#pragma once

#include "opclab/linalg.hpp"
#include "opclab/random.hpp"

#include <functional>

namespace opclab {

/// Linear policy a = theta * s, optionally with Gaussian exploration noise.
///
/// The effective action covariance is beta^2 * sigma. A policy with an empty
/// or zero sigma, or beta = 0, is deterministic.
class Policy {
 public:
  Policy() = default;
  /// Deterministic linear policy.
  explicit Policy(Matrix theta);
  /// Gaussian-linear policy; sigma must be symmetric PSD and beta >= 0.
  Policy(Matrix theta, Matrix sigma, double beta = 1.0);

  const Matrix& theta() const { return theta_; }
  const Matrix& sigma() const { return sigma_; }
  double beta() const { return beta_; }
  Eigen::Index state_dim() const { return theta_.cols(); }
  Eigen::Index action_dim() const { return theta_.rows(); }

  bool deterministic() const;
  Matrix effective_cov() const;
  /// Factor L with L * L^T = sigma (beta not applied).
  const Matrix& sigma_factor() const { return sigma_factor_; }

  Policy with_theta(Matrix theta) const;
  Policy with_beta(double beta) const;

  Vector mean_action(const Vector& s) const;

 private:
  Matrix theta_;
  Matrix sigma_;
  Matrix sigma_factor_;
  double beta_ = 0.0;
};

/// Draw an action. Deterministic policies never touch the stream.
Vector act(const Policy& policy, const Vector& s, RandomStream& rng);

/// Action for a given standard-normal draw `eps`: theta * s + beta * L * eps.
Vector act_with_noise(const Policy& policy, const Vector& s, const Vector& eps);

/// Central finite-difference gradient of `return_fn` at `theta`.
/// Throws Error when any evaluation is non-finite.
Matrix fd_policy_gradient(const std::function<double(const Matrix&)>& return_fn,
                          const Matrix& theta, double h = 1e-5);

struct ImproveSettings {
  double step_size = 0.05;    // alpha
  double trust_region = 0.04; // eps_pi, bound on the squared step norm
  int steps = 1;
};

/// Clipped gradient ascent: theta += alpha * g, with the displacement from
/// the input parameters scaled back onto ||step||^2 <= eps_pi whenever it
/// would leave the trust region.
/// `gradient_fn` is evaluated at the current parameters before every step.
Policy improve_policy(const Policy& policy,
                      const std::function<Matrix(const Matrix&)>& gradient_fn,
                      const ImproveSettings& settings);

/// Sign-based step improver with per-coordinate adaptive steps (Rprop
/// style). Steps grow by `increase` while the gradient sign persists and
/// shrink by `decrease` on a sign flip; every step is capped at
/// sqrt(eps_pi) so the trust-region bound holds. Stateful across calls.
class SignStepImprover {
 public:
  SignStepImprover(double initial_step = 0.05, double trust_region = 0.04,
                   double increase = 1.2, double decrease = 0.5);

  Policy step(const Policy& policy, const Matrix& gradient);

 private:
  double initial_step_;
  double max_step_;
  double increase_;
  double decrease_;
  Matrix steps_;
  Matrix previous_sign_;
};

}  // namespace opclab

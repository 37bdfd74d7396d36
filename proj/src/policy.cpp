#include "opclab/policy.hpp"

#include <cmath>

namespace opclab {

Policy::Policy(Matrix theta) : theta_(std::move(theta)) {
  if (!theta_.allFinite()) throw ContractViolation("policy: theta has non-finite entries");
  sigma_ = Matrix::Zero(theta_.rows(), theta_.rows());
  sigma_factor_ = sigma_;
}

Policy::Policy(Matrix theta, Matrix sigma, double beta)
    : theta_(std::move(theta)), sigma_(std::move(sigma)), beta_(beta) {
  if (!theta_.allFinite()) throw ContractViolation("policy: theta has non-finite entries");
  if (sigma_.rows() != theta_.rows() || sigma_.cols() != theta_.rows())
    throw ContractViolation("policy: sigma must be n_a x n_a");
  if (!is_symmetric_psd(sigma_)) throw ContractViolation("policy: sigma must be symmetric PSD");
  if (!(beta_ >= 0.0) || !std::isfinite(beta_))
    throw ContractViolation("policy: beta must be finite and >= 0");
  sigma_factor_ = psd_sqrt(sigma_);
}

bool Policy::deterministic() const {
  return beta_ == 0.0 || sigma_.size() == 0 || sigma_.isZero(0.0);
}

Matrix Policy::effective_cov() const { return beta_ * beta_ * sigma_; }

Policy Policy::with_theta(Matrix theta) const {
  if (theta.rows() != theta_.rows() || theta.cols() != theta_.cols())
    throw ContractViolation("policy: theta shape changed");
  Policy out = *this;
  out.theta_ = std::move(theta);
  return out;
}

Policy Policy::with_beta(double beta) const {
  if (!(beta >= 0.0)) throw ContractViolation("policy: beta must be >= 0");
  Policy out = *this;
  out.beta_ = beta;
  return out;
}

Vector Policy::mean_action(const Vector& s) const {
  if (s.size() != theta_.cols())
    throw ContractViolation("policy: state has dimension " + std::to_string(s.size()) +
                            ", expected " + std::to_string(theta_.cols()));
  return theta_ * s;
}

Vector act(const Policy& policy, const Vector& s, RandomStream& rng) {
  if (policy.deterministic()) return policy.mean_action(s);
  return act_with_noise(policy, s, rng.normal_vector(policy.action_dim()));
}

Vector act_with_noise(const Policy& policy, const Vector& s, const Vector& eps) {
  Vector a = policy.mean_action(s);
  if (!policy.deterministic()) a += policy.beta() * (policy.sigma_factor() * eps);
  return a;
}

Matrix fd_policy_gradient(const std::function<double(const Matrix&)>& return_fn,
                          const Matrix& theta, double h) {
  if (!(h > 0.0)) throw ContractViolation("fd_policy_gradient: step must be positive");
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double base = theta(i);
    probe(i) = base + h;
    const double up = return_fn(probe);
    probe(i) = base - h;
    const double down = return_fn(probe);
    probe(i) = base;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("fd_policy_gradient: non-finite return at coordinate " + std::to_string(i));
    grad(i) = (up - down) / (2.0 * h);
  }
  return grad;
}

Policy improve_policy(const Policy& policy,
                      const std::function<Matrix(const Matrix&)>& gradient_fn,
                      const ImproveSettings& settings) {
  const Matrix& start = policy.theta();
  Matrix theta = start;
  const double radius = std::sqrt(settings.trust_region);
  for (int k = 0; k < settings.steps; ++k) {
    // the region is around the parameters at entry, so several steps share it
    Matrix moved = theta - start + settings.step_size * gradient_fn(theta);
    const double norm = moved.norm();
    if (norm > radius) moved *= radius / norm;
    theta = start + moved;
  }
  return policy.with_theta(std::move(theta));
}

SignStepImprover::SignStepImprover(double initial_step, double trust_region, double increase,
                                   double decrease)
    : initial_step_(initial_step),
      max_step_(std::sqrt(trust_region)),
      increase_(increase),
      decrease_(decrease) {
  if (!(initial_step > 0.0) || !(trust_region > 0.0))
    throw ContractViolation("SignStepImprover: step and trust region must be positive");
}

Policy SignStepImprover::step(const Policy& policy, const Matrix& gradient) {
  const Matrix& theta = policy.theta();
  if (gradient.rows() != theta.rows() || gradient.cols() != theta.cols())
    throw ContractViolation("SignStepImprover: gradient shape mismatch");
  if (steps_.size() != 0 && (steps_.rows() != theta.rows() || steps_.cols() != theta.cols()))
    throw ContractViolation("SignStepImprover: parameter shape changed between calls");
  if (steps_.size() == 0) {
    steps_ = Matrix::Constant(theta.rows(), theta.cols(), std::min(initial_step_, max_step_));
    previous_sign_ = Matrix::Zero(theta.rows(), theta.cols());
  }
  Matrix delta = Matrix::Zero(theta.rows(), theta.cols());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double sign = (gradient(i) > 0.0) - (gradient(i) < 0.0);
    const double agreement = sign * previous_sign_(i);
    if (agreement > 0.0) steps_(i) = std::min(steps_(i) * increase_, max_step_);
    if (agreement < 0.0) steps_(i) *= decrease_;
    delta(i) = sign * steps_(i);
    previous_sign_(i) = sign;
  }
  // Per-coordinate caps do not bound the joint norm for matrix parameters.
  const double norm = delta.norm();
  if (norm > max_step_) delta *= max_step_ / norm;
  return policy.with_theta(theta + delta);
}

}  // namespace opclab

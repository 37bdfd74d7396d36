#include "opclab/scalar_study.hpp"

#include "opclab/env.hpp"
#include "opclab/errors.hpp"

#include <cmath>
#include <string>

namespace opclab {

namespace {

double bell(double s, double sigma_r) { return std::exp(-(s * s) / (sigma_r * sigma_r)); }

double bell_slope(double s, double sigma_r) {
  return -2.0 * s / (sigma_r * sigma_r) * bell(s, sigma_r);
}

void require_stable(double gain, const char* what) {
  if (!(std::abs(gain) <= 1.0 - kStabilityMargin))
    throw UnstableSystemError(std::string(what) + ": closed-loop gain " + std::to_string(gain) +
                              " is not stable");
}

}  // namespace

void ScalarStudy::validate() const {
  if (!(sigma_r > 0.0)) throw ContractViolation("scalar study: sigma_r must be positive");
  if (T < 1) throw ContractViolation("scalar study: T must be >= 1");
  if (!std::isfinite(A) || !std::isfinite(B) || !std::isfinite(s0))
    throw ContractViolation("scalar study: non-finite system parameter");
}

double scalar_return(const ScalarStudy& study, double dA, double dB, double theta) {
  study.validate();
  const double g = study.A + dA + (study.B + dB) * theta;
  double s = study.s0, sum = 0.0;
  for (int t = 0; t < study.T; ++t) {
    sum += bell(s, study.sigma_r);
    s *= g;
  }
  return sum / study.T;
}

double exact_return_gradient_1d(const ScalarStudy& study, double dA, double dB, double theta) {
  study.validate();
  const double b = study.B + dB;
  const double g = study.A + dA + b * theta;
  require_stable(g, "exact_return_gradient_1d");
  double sum = 0.0;
  double g_pow = 1.0;  // g^{t-1}
  for (int t = 1; t < study.T; ++t) {
    const double s = g_pow * g * study.s0;
    const double ds = t * g_pow * b * study.s0;
    sum += bell_slope(s, study.sigma_r) * ds;
    g_pow *= g;
  }
  return sum / study.T;
}

namespace {

struct OpcPath {
  double value = 0.0;
  double gradient = 0.0;
};

OpcPath opc_path(const ScalarStudy& study, double dA, double dB, double theta, double theta_ref) {
  const double a_model = study.A + dA, b_model = study.B + dB;
  const double g_ref = study.A + study.B * theta_ref;
  double s_ref = study.s0, s = study.s0, ds = 0.0;
  OpcPath out;
  for (int t = 0; t < study.T; ++t) {
    out.value += bell(s, study.sigma_r);
    out.gradient += bell_slope(s, study.sigma_r) * ds;
    const double ref_next = g_ref * s_ref;
    const double next =
        ref_next + ((a_model + b_model * theta) * s - (a_model + b_model * theta_ref) * s_ref);
    ds = (a_model + b_model * theta) * ds + b_model * s;
    s = next;
    s_ref = ref_next;
  }
  out.value /= study.T;
  out.gradient /= study.T;
  return out;
}

}  // namespace

double opc_return_1d(const ScalarStudy& study, double dA, double dB, double theta,
                     double theta_ref) {
  study.validate();
  return opc_path(study, dA, dB, theta, theta_ref).value;
}

double opc_return_gradient_1d(const ScalarStudy& study, double dA, double dB, double theta,
                              double theta_ref) {
  study.validate();
  require_stable(study.A + dA + (study.B + dB) * theta, "opc_return_gradient_1d (model)");
  require_stable(study.A + study.B * theta_ref, "opc_return_gradient_1d (reference)");
  return opc_path(study, dA, dB, theta, theta_ref).gradient;
}

double deadbeat_gain(const ScalarStudy& study, double dA, double dB) {
  const double b = study.B + dB;
  if (b == 0.0) throw ContractViolation("deadbeat_gain: input gain is zero");
  return -(study.A + dA) / b;
}

}  // namespace opclab

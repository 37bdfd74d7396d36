#pragma once

namespace opclab {

/// Deterministic scalar system s_{t+1} = A s_t + B a_t from s_0 with the bell
/// reward exp(-s^2 / sigma_r^2) and mean-averaged return over T steps.
struct ScalarStudy {
  double A = 1.0;
  double B = 1.0;
  double s0 = 1.0;
  double sigma_r = 0.05;
  int T = 60;

  void validate() const;
};

/// Return of the policy a = theta s on the model (A + dA, B + dB).
double scalar_return(const ScalarStudy& study, double dA, double dB, double theta);

/// d/dtheta of scalar_return via ds_t/dtheta = t g^{t-1} B s_0 with
/// g = A + dA + (B + dB) theta. Throws UnstableSystemError when |g| > 1 - margin.
double exact_return_gradient_1d(const ScalarStudy& study, double dA, double dB, double theta);

/// Return of the policy theta on the OPC model built from the biased model
/// (A + dA, B + dB) and the single true-system reference rollout under
/// theta_ref.
double opc_return_1d(const ScalarStudy& study, double dA, double dB, double theta,
                     double theta_ref);

/// d/dtheta of opc_return_1d. Throws UnstableSystemError unless both the
/// model closed loop under theta and the true closed loop under theta_ref are
/// stable.
double opc_return_gradient_1d(const ScalarStudy& study, double dA, double dB, double theta,
                              double theta_ref);

/// Deadbeat gain -(A + dA) / (B + dB), the return maximizer on that model.
double deadbeat_gain(const ScalarStudy& study, double dA, double dB);

}  // namespace opclab

#pragma once

#include <vector>

#include "stt/scenario.hpp"
#include "stt/tube.hpp"

namespace stt {

/// Per-dim radius gamma_i(t) = (p_i - q_i) exp(-mu_i t) + q_i.
struct Funnel {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<double> mu;

  std::size_t dims() const { return p.size(); }
  double radius(std::size_t i, double t) const;
  /// Throws ValidationError unless p > q > 0 and mu > 0 in every dim.
  void validate() const;
};

struct ControllerConfig {
  std::size_t stages = 1;
  std::vector<double> kappa;     // one per stage, > 0
  std::vector<Funnel> funnels;   // stages 2..N
  double e_max = 1.0 - 1e-9;
  /// -1 when the plant declares g negative definite; every gain flips sign.
  int g_sign = 1;

  void validate() const;
};

/// Counters the controller surfaces alongside u.
struct ControlTelemetry {
  std::vector<std::vector<double>> e;  // per stage normalized error
  std::size_t clamps = 0;              // components clamped to e_max
};

/// e_i = (2 x_i - (U_i + L_i)) / (U_i - L_i).
std::vector<double> stage1_error(const std::vector<double>& x, const std::vector<double>& lower,
                                 const std::vector<double>& upper);

/// eps_i = log((1 + e_i) / (1 - e_i)) after clamping e_i to [-e_max, e_max].
/// Adds the number of clamped components to *clamps when given.
std::vector<double> transform_error(const std::vector<double>& e, double e_max, std::size_t* clamps = nullptr);

/// Diagonal of xi: 4 / (gamma_d_i (1 - e_i^2)). IntegrityError when some
/// gamma_d_i <= 0.
std::vector<double> xi_matrix(const std::vector<double>& e, const std::vector<double>& gamma_d);

/// r_next_i = -kappa xi_i eps_i.
std::vector<double> stage_output(double kappa, const std::vector<double>& eps, const std::vector<double>& xi);

/// e_i = (x_i - r_i) / gamma_i(t).
std::vector<double> stage_k_error(const std::vector<double>& x, const std::vector<double>& r, const Funnel& funnel,
                                  double t);

/// Cascade over the stage states x_1..x_N of one agent. Reads only this
/// agent's state, tubes and config. Throws IntegrityError naming the stage
/// when some |e_i| >= 1.
std::vector<double> control_input(const std::vector<std::vector<double>>& stages, const AgentTubes& tubes,
                                  const ControllerConfig& config, double t, ControlTelemetry* telemetry = nullptr);

/// Same law on the stacked state [x_1; ...; x_N]; writes n inputs to u. The
/// law is diagonal, so each dim runs its own scalar cascade. Telemetry e
/// holds the errors after clamping.
void control_input(const double* x, const AgentTubes& tubes, const ControllerConfig& config, double t, double* u,
                   ControlTelemetry* telemetry = nullptr);

/// Config from the scenario block. Missing kappa entries repeat the last one
/// given, or 1.0. Funnels not given are sized from the initial stage states:
/// p = 2 |x_k(0) - r_k(0)| + 0.1, q = 0.05, mu = 1, where r_k(0) comes from
/// the cascade with the final gains.
ControllerConfig make_controller(const ControllerSettings& settings, std::size_t stages, int g_sign,
                                 const AgentTubes& tubes, const std::vector<std::vector<double>>& initial);

}  // namespace stt

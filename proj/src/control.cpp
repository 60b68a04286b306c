#include "stt/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stt/errors.hpp"

namespace stt {

double Funnel::radius(std::size_t i, double t) const { return (p[i] - q[i]) * std::exp(-mu[i] * t) + q[i]; }

void Funnel::validate() const {
  if (q.size() != p.size() || mu.size() != p.size()) throw ValidationError("control: funnel p, q, mu sizes differ");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(q[i] > 0.0) || !(p[i] > q[i])) throw ValidationError("control: funnel needs p > q > 0");
    if (!(mu[i] > 0.0)) throw ValidationError("control: funnel decay rate must be positive");
  }
}

void ControllerConfig::validate() const {
  if (stages < 1) throw ValidationError("control: at least one stage");
  if (kappa.size() != stages) throw ValidationError("control: one gain per stage");
  for (double k : kappa)
    if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("control: gains must be positive");
  if (funnels.size() != stages - 1) throw ValidationError("control: one funnel per stage after the first");
  for (const Funnel& f : funnels) f.validate();
  if (!(e_max > 0.0 && e_max < 1.0)) throw ValidationError("control: e_max must lie in (0, 1)");
  if (g_sign != 1 && g_sign != -1) throw ValidationError("control: g_sign must be +1 or -1");
}

std::vector<double> stage1_error(const std::vector<double>& x, const std::vector<double>& lower,
                                 const std::vector<double>& upper) {
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = (2.0 * x[i] - (upper[i] + lower[i])) / (upper[i] - lower[i]);
  return e;
}

std::vector<double> transform_error(const std::vector<double>& e, double e_max, std::size_t* clamps) {
  std::vector<double> eps(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    double v = e[i];
    if (v > e_max || v < -e_max) {
      v = std::copysign(e_max, v);
      if (clamps) ++*clamps;
    }
    eps[i] = std::log((1.0 + v) / (1.0 - v));
  }
  return eps;
}

std::vector<double> xi_matrix(const std::vector<double>& e, const std::vector<double>& gamma_d) {
  std::vector<double> xi(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!(gamma_d[i] > 0.0)) throw IntegrityError("control: non-positive tube width " + std::to_string(gamma_d[i]));
    xi[i] = 4.0 / (gamma_d[i] * (1.0 - e[i] * e[i]));
  }
  return xi;
}

std::vector<double> stage_output(double kappa, const std::vector<double>& eps, const std::vector<double>& xi) {
  std::vector<double> r(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) r[i] = -kappa * xi[i] * eps[i];
  return r;
}

std::vector<double> stage_k_error(const std::vector<double>& x, const std::vector<double>& r, const Funnel& funnel,
                                  double t) {
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = (x[i] - r[i]) / funnel.radius(i, t);
  return e;
}

namespace {

[[noreturn]] void breach(std::size_t stage, std::size_t dim, double e) {
  throw IntegrityError("control: stage " + std::to_string(stage + 1) + " dim " + std::to_string(dim + 1) +
                       " left its tube (e = " + std::to_string(e) + ")");
}

// One scalar stage of the diagonal law: breach check, clamp, transform, gain.
double stage_scalar(std::size_t stage, std::size_t dim, double e, double gamma_d, double gain, double e_max,
                    std::size_t& clamps, double& e_used) {
  if (!(std::abs(e) < 1.0)) breach(stage, dim, e);
  if (!(gamma_d > 0.0)) throw IntegrityError("control: non-positive tube width " + std::to_string(gamma_d));
  if (e > e_max || e < -e_max) {
    e = std::copysign(e_max, e);
    ++clamps;
  }
  e_used = e;
  const double eps = std::log((1.0 + e) / (1.0 - e));
  const double xi = 4.0 / (gamma_d * (1.0 - e * e));
  return -gain * xi * eps;
}

}  // namespace

void control_input(const double* x, const AgentTubes& tubes, const ControllerConfig& config, double t, double* u,
                   ControlTelemetry* telemetry) {
  const std::size_t n = tubes.dims.size();
  const std::size_t stages = config.stages;
  if (telemetry) telemetry->e.assign(stages, std::vector<double>(n));
  std::size_t clamps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = eval_face(tubes.dims[i].lower, t);
    const double hi = eval_face(tubes.dims[i].upper, t);
    if (!(hi > lo)) throw IntegrityError("control: tube faces inverted at t = " + std::to_string(t));
    double e_used = 0.0;
    double r = stage_scalar(0, i, (2.0 * x[i] - (hi + lo)) / (hi - lo), hi - lo, config.g_sign * config.kappa[0],
                            config.e_max, clamps, e_used);
    if (telemetry) telemetry->e[0][i] = e_used;
    for (std::size_t k = 1; k < stages; ++k) {
      const double radius = config.funnels[k - 1].radius(i, t);
      r = stage_scalar(k, i, (x[k * n + i] - r) / radius, radius, config.g_sign * config.kappa[k], config.e_max,
                       clamps, e_used);
      if (telemetry) telemetry->e[k][i] = e_used;
    }
    u[i] = r;
  }
  if (telemetry) telemetry->clamps += clamps;
}

std::vector<double> control_input(const std::vector<std::vector<double>>& stages, const AgentTubes& tubes,
                                  const ControllerConfig& config, double t, ControlTelemetry* telemetry) {
  if (stages.size() != config.stages) throw ValidationError("control: stage count mismatch");
  const std::size_t n = tubes.dims.size();
  std::vector<double> stacked;
  for (const auto& s : stages) {
    if (s.size() != n) throw ValidationError("control: state and tube dims differ");
    stacked.insert(stacked.end(), s.begin(), s.end());
  }
  std::vector<double> u(n);
  control_input(stacked.data(), tubes, config, t, u.data(), telemetry);
  return u;
}

ControllerConfig make_controller(const ControllerSettings& settings, std::size_t stages, int g_sign,
                                 const AgentTubes& tubes, const std::vector<std::vector<double>>& initial) {
  ControllerConfig c;
  c.stages = stages;
  c.g_sign = g_sign;
  c.e_max = settings.e_max;
  for (std::size_t k = 0; k < stages; ++k) {
    if (k < settings.kappa.size()) c.kappa.push_back(settings.kappa[k]);
    else c.kappa.push_back(settings.kappa.empty() ? 1.0 : settings.kappa.back());
  }
  const std::size_t n = tubes.dims.size();
  for (std::size_t k = 1; k < stages; ++k) {
    Funnel f;
    if (k - 1 < settings.funnels.size()) {
      const FunnelSettings& s = settings.funnels[k - 1];
      f.p = s.p;
      f.q = s.q;
      f.mu = s.mu;
    } else {
      // r_k(0) from the cascade built so far.
      ControllerConfig partial = c;
      partial.stages = k;
      partial.kappa.resize(k);
      std::vector<std::vector<double>> head(initial.begin(), initial.begin() + static_cast<std::ptrdiff_t>(k));
      const std::vector<double> r = control_input(head, tubes, partial, 0.0);
      f.p.resize(n);
      f.q.assign(n, 0.05);
      f.mu.assign(n, 1.0);
      for (std::size_t i = 0; i < n; ++i) f.p[i] = 2.0 * std::abs(initial[k][i] - r[i]) + 0.1;
    }
    c.funnels.push_back(std::move(f));
  }
  c.validate();
  return c;
}

}  // namespace stt

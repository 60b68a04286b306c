#include "stt/sim.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "stt/errors.hpp"

namespace stt {

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kOk: return "ok";
    case RunStatus::kIntegrityError: return "integrity_error";
    case RunStatus::kNonFinite: return "non_finite";
  }
  return "?";
}

double stiffness_bound(const ControllerConfig& config, const AgentTubes& tubes, double horizon) {
  constexpr int kGrid = 1000;
  double w_min = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= kGrid; ++g) {
    const double t = horizon * g / kGrid;
    for (const FacePair& p : tubes.dims) w_min = std::min(w_min, eval_face(p.upper, t) - eval_face(p.lower, t));
  }
  if (!(w_min > 0.0)) throw IntegrityError("sim: tube faces inverted");
  double rate = 16.0 * config.kappa[0] / (w_min * w_min);
  for (std::size_t k = 1; k < config.stages; ++k) {
    for (double q : config.funnels[k - 1].q) rate = std::max(rate, 8.0 * config.kappa[k] / (q * q));
  }
  return rate;
}

std::vector<double> default_initial_state(const PlantModel& model, const AgentTubes& tubes) {
  std::vector<double> x(model.state_size(), 0.0);
  for (std::size_t i = 0; i < model.n; ++i)
    x[i] = 0.5 * (eval_face(tubes.dims[i].lower, 0.0) + eval_face(tubes.dims[i].upper, 0.0));
  return x;
}

namespace {

std::vector<std::vector<double>> split_stages(const std::vector<double>& x, std::size_t n, std::size_t stages) {
  std::vector<std::vector<double>> out(stages);
  for (std::size_t k = 0; k < stages; ++k)
    out[k].assign(x.begin() + static_cast<std::ptrdiff_t>(k * n), x.begin() + static_cast<std::ptrdiff_t>((k + 1) * n));
  return out;
}

Trajectory integrate_agent(std::size_t j, const ScenarioSpec& spec, const TubeSet& tubes, const PlantModel& model,
                           const SimConfig& cfg, std::size_t steps) {
  Trajectory tr;
  tr.agent = j;
  tr.state_size = model.state_size();
  tr.input_size = model.n;

  const AgentTubes ct = controller_tubes(model, tubes.agents[j]);
  std::vector<double> x = j < cfg.initial.size() ? cfg.initial[j] : default_initial_state(model, ct);
  if (x.size() != model.state_size()) throw ValidationError("sim: initial state has the wrong size");

  auto record = [&](double t, const std::vector<double>& u, const ControlTelemetry& tel) {
    tr.times.push_back(t);
    tr.states.insert(tr.states.end(), x.begin(), x.end());
    tr.inputs.insert(tr.inputs.end(), u.begin(), u.end());
    tr.errors.insert(tr.errors.end(), tel.e.front().begin(), tel.e.front().end());
  };

  double t = 0.0;
  double now = 0.0;  // time of the latest controller evaluation
  try {
    const ControllerConfig config = agent_controller(model, ct, cfg, x);
    tr.substeps = cfg.substeps;
    if (tr.substeps == 0) {
      const double rate = stiffness_bound(config, ct, spec.horizon);
      tr.substeps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.dt * rate / kStiffStep)));
    }
    Disturbance dist(cfg.disturbance, model.state_size(), j);
    const double h = cfg.dt / static_cast<double>(tr.substeps);

    std::vector<double> k1, k2, k3, k4, tmp(x.size());
    const std::vector<double>* w = nullptr;
    std::vector<double> u_stage(model.n);
    auto rhs = [&](const std::vector<double>& s, double ts, std::vector<double>& out) {
      now = ts;
      control_input(s.data(), ct, config, ts, u_stage.data());
      dynamics(model, s, u_stage, *w, ts, out);
    };

    for (std::size_t k = 0;; ++k) {
      t = k == steps ? spec.horizon : static_cast<double>(k) * cfg.dt;
      now = t;
      ControlTelemetry tel;
      std::vector<double> u(model.n);
      control_input(x.data(), ct, config, t, u.data(), &tel);
      if (g_sign_margin(model, x, t) <= 0.0)
        throw IntegrityError("sim: plant left the region where g has its declared sign");
      tr.clamps += tel.clamps;
      record(t, u, tel);
      if (k == steps) break;

      w = &dist.sample(t);
      for (std::size_t s = 0; s < tr.substeps; ++s) {
        const double ts = t + static_cast<double>(s) * h;
        rhs(x, ts, k1);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        rhs(tmp, ts + 0.5 * h, k2);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        rhs(tmp, ts + 0.5 * h, k3);
        for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h * k3[i];
        rhs(tmp, std::min(ts + h, spec.horizon), k4);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
      for (double v : x) {
        if (!std::isfinite(v)) {
          tr.status = RunStatus::kNonFinite;
          tr.failure_time = t + cfg.dt;
          tr.message = "non-finite state";
          return tr;
        }
      }
    }
  } catch (const IntegrityError& e) {
    tr.status = RunStatus::kIntegrityError;
    tr.failure_time = now;
    tr.message = e.what();
  }
  return tr;
}

}  // namespace

ControllerConfig agent_controller(const PlantModel& model, const AgentTubes& tubes, const SimConfig& cfg,
                                  const std::vector<double>& initial) {
  return make_controller(cfg.controller, model.stages, model.g_sign, tubes,
                         split_stages(initial, model.n, model.stages));
}

std::vector<Trajectory> run_closed_loop(const ScenarioSpec& spec, const TubeSet& tubes, const PlantModel& model,
                                        const SimConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw ValidationError("sim: dt must be positive");
  if (tubes.agents.size() != spec.agents.size()) throw ValidationError("sim: tube and scenario agent counts differ");
  if (std::abs(tubes.horizon - spec.horizon) > 1e-12 * spec.horizon)
    throw ValidationError("sim: tube and scenario horizons differ");
  const double ratio = spec.horizon / cfg.dt;
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  if (steps == 0 || std::abs(ratio - static_cast<double>(steps)) > 1e-6)
    throw ValidationError("sim: dt must divide the horizon");

  const std::size_t m = spec.agents.size();
  std::vector<Trajectory> out(m);
  const auto mm = static_cast<std::ptrdiff_t>(m);
  if (cfg.exec == Exec::kSerial) {
    for (std::ptrdiff_t j = 0; j < mm; ++j) out[j] = integrate_agent(j, spec, tubes, model, cfg, steps);
  } else {
    std::vector<std::string> errors(m);
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (std::ptrdiff_t j = 0; j < mm; ++j) {
      try {
        out[j] = integrate_agent(j, spec, tubes, model, cfg, steps);
      } catch (const std::exception& e) {
        errors[j] = e.what();
      }
    }
    for (const auto& e : errors)
      if (!e.empty()) throw ValidationError(e);
  }
  return out;
}

void write_trajectories_csv(const std::vector<Trajectory>& trajs, std::ostream& out) {
  if (trajs.empty()) return;
  out << "t,agent";
  for (std::size_t i = 0; i < trajs.front().state_size; ++i) out << ",x" << i + 1;
  for (std::size_t i = 0; i < trajs.front().input_size; ++i) out << ",u" << i + 1;
  for (std::size_t i = 0; i < trajs.front().input_size; ++i) out << ",e" << i + 1;
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  for (const Trajectory& tr : trajs) {
    for (std::size_t k = 0; k < tr.samples(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", tr.times[k]);
      out << buf << ',' << tr.agent;
      for (std::size_t i = 0; i < tr.state_size; ++i) put(tr.states[k * tr.state_size + i]);
      for (std::size_t i = 0; i < tr.input_size; ++i) put(tr.inputs[k * tr.input_size + i]);
      for (std::size_t i = 0; i < tr.input_size; ++i) put(tr.errors[k * tr.input_size + i]);
      out << '\n';
    }
  }
}

}  // namespace stt

#include "stt/verify.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json_util.hpp"
#include "stt/synth.hpp"

namespace stt {

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::kPass: return "pass";
    case CheckStatus::kFail: return "fail";
    case CheckStatus::kInconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool covers_horizon(const Trajectory& traj, double horizon) {
  return traj.status == RunStatus::kOk && !traj.times.empty() && traj.times.front() == 0.0 &&
         traj.times.back() >= horizon - 1e-9 * std::max(1.0, horizon);
}

double distance_to_box(const std::vector<double>& y, const Box& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = std::max({b[i].lo - y[i], 0.0, y[i] - b[i].hi});
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TrasResult check_tras(const Trajectory& traj, const ScenarioSpec& spec) {
  TrasResult r;
  const std::size_t n = spec.dims;
  const AgentTask& task = spec.agents.at(traj.agent);
  if (traj.samples() == 0) return r;
  r.start_ok = task.start.contains(traj.output(0, n));
  const std::vector<double> y_end = traj.output(traj.samples() - 1, n);
  r.goal_distance = distance_to_box(y_end, task.goal);
  r.avoid_ok = true;
  for (std::size_t k = 0; k < traj.samples() && r.avoid_ok; ++k) {
    const std::vector<double> y = traj.output(k, n);
    const double t = std::min(traj.times[k], spec.horizon);
    for (std::size_t o = 0; o < spec.obstacles.size(); ++o) {
      if (unsafe_box_at(spec.obstacles[o], t, spec.horizon).contains(y)) {
        r.avoid_ok = false;
        r.violation_t = traj.times[k];
        r.violation_region = o;
        break;
      }
    }
  }
  if (!covers_horizon(traj, spec.horizon)) {
    // A short run can still show a violation, never a pass.
    r.status = (!r.start_ok || !r.avoid_ok) ? CheckStatus::kFail : CheckStatus::kInconclusive;
    return r;
  }
  r.goal_ok = task.goal.contains(y_end);
  r.status = r.start_ok && r.goal_ok && r.avoid_ok ? CheckStatus::kPass : CheckStatus::kFail;
  return r;
}

ContainmentResult check_containment(const Trajectory& traj, const AgentTubes& tubes) {
  ContainmentResult r;
  const std::size_t n = tubes.dims.size();
  r.worst = kInf;
  r.margins.reserve(traj.samples());
  for (std::size_t k = 0; k < traj.samples(); ++k) {
    const double t = traj.times[k];
    const double* x = traj.state(k);
    double m = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      m = std::min(m, x[i] - eval_face(tubes.dims[i].lower, t));
      m = std::min(m, eval_face(tubes.dims[i].upper, t) - x[i]);
    }
    r.margins.push_back(m);
    if (m < r.worst) {
      r.worst = m;
      r.worst_t = t;
    }
  }
  r.passed = !r.margins.empty() && r.worst > 0.0;
  return r;
}

CaResult check_ca(const std::vector<Trajectory>& trajs, std::size_t output_dims, Exec exec) {
  CaResult r;
  r.min_distance = kInf;
  const std::size_t m = trajs.size();
  if (m < 2) return r;
  std::size_t samples = trajs.front().samples();
  for (const Trajectory& tr : trajs) {
    samples = std::min(samples, tr.samples());
  }
  for (const Trajectory& tr : trajs) {
    for (std::size_t k = 0; k < samples; ++k) {
      if (tr.times[k] != trajs.front().times[k]) throw ValidationError("verify: trajectories do not share a time base");
    }
  }

  struct Best {
    double d = kInf;
    std::size_t k = 0, a = 0, b = 0;
  };
  auto at_sample = [&](std::size_t k, Best& best) {
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a + 1; b < m; ++b) {
        const double* ya = trajs[a].state(k);
        const double* yb = trajs[b].state(k);
        double s = 0.0;
        for (std::size_t i = 0; i < output_dims; ++i) s += (ya[i] - yb[i]) * (ya[i] - yb[i]);
        const double d = std::sqrt(s);
        if (d < best.d) best = {d, k, a, b};
      }
    }
  };
  Best best;
  const auto ns = static_cast<std::ptrdiff_t>(samples);
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t k = 0; k < ns; ++k) at_sample(k, best);
  } else {
    std::vector<Best> per(static_cast<std::size_t>(worker_count()));
#pragma omp parallel num_threads(worker_count())
    {
      Best local;
#pragma omp for schedule(static)
      for (std::ptrdiff_t k = 0; k < ns; ++k) at_sample(k, local);
      per[omp_get_thread_num()] = local;
    }
    // Ties resolve to the earliest sample, as in the serial loop.
    for (const Best& b : per)
      if (b.d < best.d || (b.d == best.d && b.k < best.k)) best = b;
  }
  r.min_distance = best.d;
  r.min_distance_t = trajs.front().times[best.k];
  r.agent_a = best.a;
  r.agent_b = best.b;
  r.passed = best.d > 0.0;
  return r;
}

bool VerificationReport::tras_pass() const {
  return std::all_of(agents.begin(), agents.end(),
                     [](const AgentReport& a) { return a.tras.status == CheckStatus::kPass; });
}

bool VerificationReport::containment_pass() const {
  return std::all_of(agents.begin(), agents.end(), [](const AgentReport& a) { return a.containment_pass; });
}

bool VerificationReport::passed() const { return first_failure().empty(); }

std::string VerificationReport::first_failure() const {
  for (const AgentReport& a : agents) {
    const std::string who = "agent " + std::to_string(a.agent + 1);
    if (a.run != RunStatus::kOk) return who + ": run aborted (" + a.run_message + ")";
    if (!a.containment_pass) return who + ": containment";
    if (a.tras.status != CheckStatus::kPass) {
      if (!a.tras.start_ok) return who + ": start";
      if (!a.tras.avoid_ok) return who + ": avoidance";
      if (!a.tras.goal_ok) return who + ": goal";
      return who + ": T-RAS inconclusive";
    }
  }
  if (!ca.passed) return "collision avoidance";
  return {};
}

VerificationReport verify_run(const ScenarioSpec& spec, const TubeSet& tubes, const std::vector<Trajectory>& trajs,
                              double tube_resolution, Exec exec) {
  VerificationReport rep;
  const std::size_t n = spec.dims;
  rep.agents.resize(trajs.size());
  auto one = [&](std::size_t j) {
    const Trajectory& tr = trajs[j];
    AgentReport& a = rep.agents[j];
    a.agent = tr.agent;
    a.run = tr.status;
    a.run_message = tr.message;
    a.tras = check_tras(tr, spec);
    const ContainmentResult c = check_containment(tr, tubes.agents.at(tr.agent));
    a.containment_pass = c.passed && covers_horizon(tr, spec.horizon);
    a.worst_margin = c.worst;
    a.worst_margin_t = c.worst_t;
    for (std::size_t k = 1; k < tr.samples(); ++k) {
      for (std::size_t i = 0; i < n; ++i)
        a.max_step_motion = std::max(a.max_step_motion, std::abs(tr.state(k)[i] - tr.state(k - 1)[i]));
    }
  };
  const auto m = static_cast<std::ptrdiff_t>(trajs.size());
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t j = 0; j < m; ++j) one(j);
  } else {
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (std::ptrdiff_t j = 0; j < m; ++j) one(j);
  }
  rep.ca = check_ca(trajs, n, exec);

  const TubeValidation v = validate_tubes(tubes, spec, tube_resolution, 0.0, exec);
  const FamilyCheck& col = v[RopFamily::kCollision];
  rep.tube_gap = col.worst;
  rep.tube_gap_pass = col.passed;

  double worst = kInf;
  double motion = 0.0;
  for (const AgentReport& a : rep.agents) {
    worst = std::min(worst, a.worst_margin);
    motion = std::max(motion, a.max_step_motion);
  }
  rep.sampling_robustness = worst - motion;
  return rep;
}

namespace {

detail::json finite_or_null(double v) { return std::isfinite(v) ? detail::json(v) : detail::json(nullptr); }

}  // namespace

std::string dump_report(const VerificationReport& r) {
  using detail::json;
  json j;
  j["passed"] = r.passed();
  j["first_failure"] = r.first_failure();
  j["tras_pass"] = r.tras_pass();
  j["containment_pass"] = r.containment_pass();
  json agents = json::array();
  for (const AgentReport& a : r.agents) {
    json x;
    x["agent"] = a.agent + 1;
    x["run"] = to_string(a.run);
    if (!a.run_message.empty()) x["run_message"] = a.run_message;
    x["tras"] = to_string(a.tras.status);
    x["start_ok"] = a.tras.start_ok;
    x["goal_ok"] = a.tras.goal_ok;
    x["avoid_ok"] = a.tras.avoid_ok;
    if (!a.tras.avoid_ok) x["avoid_violation_t"] = a.tras.violation_t;
    x["goal_distance"] = a.tras.goal_distance;
    x["containment_pass"] = a.containment_pass;
    x["worst_margin"] = finite_or_null(a.worst_margin);
    x["worst_margin_t"] = a.worst_margin_t;
    x["max_step_motion"] = a.max_step_motion;
    agents.push_back(x);
  }
  j["agents"] = agents;
  j["ca_pass"] = r.ca.passed;
  j["min_pair_distance"] = finite_or_null(r.ca.min_distance);
  j["min_pair_distance_t"] = r.ca.min_distance_t;
  j["min_pair"] = {r.ca.agent_a + 1, r.ca.agent_b + 1};
  j["tube_gap"] = r.tube_gap;
  j["tube_gap_pass"] = r.tube_gap_pass;
  j["sampling_robustness"] = finite_or_null(r.sampling_robustness);
  return j.dump(2) + "\n";
}

std::string summarize_report(const VerificationReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << "verification: " << (r.passed() ? "PASS" : "FAIL");
  if (!r.passed()) out << " (" << r.first_failure() << ")";
  out << "\n\n agent  run  T-RAS         containment  worst margin   goal dist   max step\n";
  for (const AgentReport& a : r.agents) {
    char line[160];
    std::snprintf(line, sizeof line, " %5zu  %-3s  %-12s  %-11s  %12.4e  %10.3e  %9.3e\n", a.agent + 1,
                  a.run == RunStatus::kOk ? "ok" : "ERR", to_string(a.tras.status),
                  a.containment_pass ? "pass" : "fail", a.worst_margin, a.tras.goal_distance, a.max_step_motion);
    out << line;
  }
  out << "\n collision avoidance: " << (r.ca.passed ? "pass" : "fail") << ", min pair distance " << r.ca.min_distance;
  if (std::isfinite(r.ca.min_distance))
    out << " (agents " << r.ca.agent_a + 1 << "-" << r.ca.agent_b + 1 << ", t = " << r.ca.min_distance_t << ")";
  out << "\n tube gap (worst separation margin): " << r.tube_gap << (r.tube_gap_pass ? " (disjoint)" : " (overlap)")
      << "\n sampling robustness: " << r.sampling_robustness << "\n";
  for (const AgentReport& a : r.agents)
    if (a.run != RunStatus::kOk) out << " agent " << a.agent + 1 << ": " << a.run_message << "\n";
  return out.str();
}

}  // namespace stt

#pragma once

#include <string>
#include <vector>

#include "stt/parallel.hpp"
#include "stt/scenario.hpp"
#include "stt/sim.hpp"
#include "stt/tube.hpp"

namespace stt {

enum class CheckStatus { kPass, kFail, kInconclusive };

const char* to_string(CheckStatus s);

struct TrasResult {
  CheckStatus status = CheckStatus::kInconclusive;
  bool start_ok = false;
  bool goal_ok = false;
  bool avoid_ok = false;
  double goal_distance = 0.0;  // Euclidean distance from y(t_c) to the goal box
  double violation_t = 0.0;    // first sample inside an unsafe box
  std::size_t violation_region = 0;
};

/// y(0) in S, y(t_c) in T, y(t) outside every U(t) at each sample. A
/// trajectory that stops before t_c is inconclusive.
TrasResult check_tras(const Trajectory& traj, const ScenarioSpec& spec);

struct ContainmentResult {
  std::vector<double> margins;  // per sample: min over dims of distance to the nearer face
  double worst = 0.0;
  double worst_t = 0.0;
  bool passed = false;          // every margin > 0
};

/// Output dims of the trajectory against the agent's tubes. Faces are
/// exclusive: a margin of 0 fails.
ContainmentResult check_containment(const Trajectory& traj, const AgentTubes& tubes);

struct CaResult {
  bool passed = true;           // vacuous with fewer than two agents
  double min_distance = 0.0;    // +inf without pairs
  double min_distance_t = 0.0;
  std::size_t agent_a = 0;
  std::size_t agent_b = 0;
};

/// Min over samples and pairs of the Euclidean output distance; passes iff
/// it is > 0. Trajectories must share the time base.
CaResult check_ca(const std::vector<Trajectory>& trajs, std::size_t output_dims, Exec exec = Exec::kParallel);

struct AgentReport {
  std::size_t agent = 0;
  RunStatus run = RunStatus::kOk;
  std::string run_message;
  TrasResult tras;
  bool containment_pass = false;
  double worst_margin = 0.0;
  double worst_margin_t = 0.0;
  double max_step_motion = 0.0;  // max sup-norm output change between samples
};

struct VerificationReport {
  std::vector<AgentReport> agents;
  CaResult ca;
  /// Worst collision-family margin of validate_tubes; negative means the
  /// tubes are disjoint at every grid time.
  double tube_gap = 0.0;
  bool tube_gap_pass = false;
  /// min worst_margin minus max max_step_motion; positive means no sample
  /// gap is wide enough for the output to cross a face unobserved.
  double sampling_robustness = 0.0;

  bool tras_pass() const;
  bool containment_pass() const;
  /// T-RAS, containment and the pointwise CA check all pass.
  bool passed() const;
  /// First failing check, empty when everything passed.
  std::string first_failure() const;
};

/// Runs every check. tube_resolution is the validate_tubes grid step.
VerificationReport verify_run(const ScenarioSpec& spec, const TubeSet& tubes, const std::vector<Trajectory>& trajs,
                              double tube_resolution = 1e-3, Exec exec = Exec::kParallel);

/// Structured text (JSON).
std::string dump_report(const VerificationReport& r);
/// One-page plain-text summary.
std::string summarize_report(const VerificationReport& r);

}  // namespace stt

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stt/control.hpp"
#include "stt/parallel.hpp"
#include "stt/plant.hpp"
#include "stt/scenario.hpp"
#include "stt/tube.hpp"

namespace stt {

enum class RunStatus { kOk, kIntegrityError, kNonFinite };

const char* to_string(RunStatus s);

struct Trajectory {
  std::size_t agent = 0;
  std::size_t state_size = 0;
  std::size_t input_size = 0;
  std::vector<double> times;
  std::vector<double> states;  // row per time, state_size wide
  std::vector<double> inputs;  // row per time, input_size wide
  std::vector<double> errors;  // stage-1 normalized error, input_size wide
  std::size_t clamps = 0;
  std::size_t substeps = 1;
  RunStatus status = RunStatus::kOk;
  double failure_time = 0.0;
  std::string message;

  std::size_t samples() const { return times.size(); }
  const double* state(std::size_t k) const { return states.data() + k * state_size; }
  std::vector<double> output(std::size_t k, std::size_t dims) const {
    return {state(k), state(k) + dims};
  }
};

struct SimConfig {
  double dt = 1e-3;
  /// RK4 steps per dt; 0 picks the smallest count that keeps h times the
  /// controller's linearized gain at or below kStiffStep.
  std::size_t substeps = 0;
  ControllerSettings controller;
  DisturbanceSettings disturbance;
  /// Stacked initial state per agent; empty puts stage 1 at the tube centre
  /// and the other stages at zero.
  std::vector<std::vector<double>> initial;
  Exec exec = Exec::kParallel;
};

/// Largest h times the e = 0 closed-loop rate. Barrier gains grow as |e|
/// approaches 1, and the drone start transient needs about 5x below the
/// e = 0 RK4 limit, so this keeps a 1.6x margin over that.
inline constexpr double kStiffStep = 0.1;

/// Largest linearized closed-loop rate of the controller at e = 0:
/// 16 kappa_1 / w_min^2 for stage 1 (w_min the narrowest tube width over the
/// horizon) and 8 kappa_k / q_k^2 for funnel stages.
double stiffness_bound(const ControllerConfig& config, const AgentTubes& tubes, double horizon);

/// Controller config the simulator uses for one agent.
ControllerConfig agent_controller(const PlantModel& model, const AgentTubes& tubes, const SimConfig& cfg,
                                  const std::vector<double>& initial);

std::vector<double> default_initial_state(const PlantModel& model, const AgentTubes& tubes);

/// Fixed-step RK4 per agent; u is re-evaluated at every RK4 stage, w is held
/// over each dt. Agents are integrated independently. Failures are recorded
/// in the trajectory (status, time, message) rather than thrown.
std::vector<Trajectory> run_closed_loop(const ScenarioSpec& spec, const TubeSet& tubes, const PlantModel& model,
                                        const SimConfig& cfg);

/// Columns t, agent, x1..xS, u1..un, e1..en; 17 significant digits.
void write_trajectories_csv(const std::vector<Trajectory>& trajs, std::ostream& out);

}  // namespace stt

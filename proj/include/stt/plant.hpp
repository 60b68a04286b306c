#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stt/scenario.hpp"
#include "stt/tube.hpp"

namespace stt {

enum class PlantKind { kOmnidirectional, kDroneChain, kSingleIntegrator, kCustom };

PlantKind parse_plant_kind(const std::string& s);
const char* to_string(PlantKind k);

/// Stage i of a custom pure-feedback plant:
/// dx_i = f_i(x_1..x_i) + g_i(x_1..x_i) x_{i+1} + w_i, with u as x_{N+1}.
/// g returns an n x n matrix, row-major.
struct PureFeedbackStage {
  std::function<std::vector<double>(const std::vector<double>& stacked, double t)> f;
  std::function<std::vector<double>(const std::vector<double>& stacked, double t)> g;
};

/// Ground-truth dynamics used only by the simulator.
struct PlantModel {
  PlantKind kind = PlantKind::kSingleIntegrator;
  std::size_t n = 0;       // per-stage state dims (the controller's n)
  std::size_t outputs = 0; // leading stage-1 dims that form y
  std::size_t stages = 1;
  int g_sign = 1;
  std::vector<PureFeedbackStage> custom;  // kCustom only, one per stage

  std::size_t state_size() const { return n * stages; }
};

/// Model for the scenario's plant block. The omnidirectional robot carries a
/// heading state on top of the scenario dims; drone chains are two stages.
PlantModel make_plant(const PlantSettings& settings, std::size_t output_dims);

/// Heading band of the omnidirectional robot, (-pi/3, pi/3).
inline constexpr double kHeadingHalfWidth = 1.0471975511965976;

/// Stage-1 tubes seen by the controller: the synthesized faces, plus a
/// constant heading band as the last dim for the omnidirectional robot.
AgentTubes controller_tubes(const PlantModel& model, const AgentTubes& tubes);

/// State derivative for the stacked state [x_1; ...; x_N].
void dynamics(const PlantModel& model, const std::vector<double>& state, const std::vector<double>& u,
              const std::vector<double>& w, double t, std::vector<double>& dx);

/// Smallest eigenvalue of the symmetric part of g_N at this state, times
/// g_sign. Positive iff the declared sign holds here.
double g_sign_margin(const PlantModel& model, const std::vector<double>& state, double t);

enum class DisturbanceKind { kZero, kUniform, kSinusoidal };

DisturbanceKind parse_disturbance_kind(const std::string& s);

/// Seeded per-agent disturbance, sampled once per step and held.
class Disturbance {
 public:
  Disturbance(const DisturbanceSettings& settings, std::size_t size, std::size_t agent);

  /// w at step start time t. Throws IntegrityError if a sample exceeds the
  /// bound, which cannot happen for the built-in kinds.
  const std::vector<double>& sample(double t);
  double bound() const { return bound_; }

 private:
  DisturbanceKind kind_;
  double bound_;
  std::mt19937_64 rng_;
  std::vector<double> freq_;
  std::vector<double> phase_;
  std::vector<double> w_;
};

}  // namespace stt

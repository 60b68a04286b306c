#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stt/errors.hpp"

namespace stt {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
  /// Closed-interval overlap (touching endpoints count).
  bool intersects(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis-aligned box, the product of one interval per dimension.
struct Box {
  std::vector<Interval> axes;

  Box() = default;
  explicit Box(std::vector<Interval> a) : axes(std::move(a)) {}

  std::size_t dims() const { return axes.size(); }
  const Interval& operator[](std::size_t i) const { return axes[i]; }
  Interval& operator[](std::size_t i) { return axes[i]; }

  bool contains(const std::vector<double>& point) const;
  bool contains(const Box& other) const;
  bool intersects(const Box& other) const;
  std::vector<double> center() const;

  friend bool operator==(const Box&, const Box&) = default;
};

enum class Interpolation { kStatic, kPiecewiseLinear };

/// How the sampling module covers an obstacle. Boxes are normally reduced to
/// their extreme faces; kLattice forces the generic volumetric point cloud.
enum class RegionSampling { kFaces, kLattice };

struct Keyframe {
  double time = 0.0;
  Box box;

  friend bool operator==(const Keyframe&, const Keyframe&) = default;
};

/// Time-varying unsafe box U(t), given by keyframes.
struct UnsafeRegion {
  std::vector<Keyframe> keyframes;
  Interpolation interpolation = Interpolation::kStatic;
  RegionSampling sampling = RegionSampling::kFaces;

  friend bool operator==(const UnsafeRegion&, const UnsafeRegion&) = default;
};

struct AgentTask {
  std::string name;
  Box start;
  Box goal;
  std::vector<int> tube_degree_per_dim;
  std::vector<double> min_width_per_dim;

  friend bool operator==(const AgentTask&, const AgentTask&) = default;
};

// Simulation-side blocks. They are carried verbatim by the scenario file and
// interpreted by the plant, sim and control modules.

struct PlantSettings {
  std::string kind = "single_integrator";  // omnidirectional | drone_chain | single_integrator
  std::string g_sign = "positive";

  friend bool operator==(const PlantSettings&, const PlantSettings&) = default;
};

struct DisturbanceSettings {
  std::string kind = "uniform";  // zero | uniform | sinusoidal
  double bound = 0.01;
  std::uint64_t seed = 1;

  friend bool operator==(const DisturbanceSettings&, const DisturbanceSettings&) = default;
};

struct FunnelSettings {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<double> mu;

  friend bool operator==(const FunnelSettings&, const FunnelSettings&) = default;
};

struct ControllerSettings {
  std::vector<double> kappa;  // one per stage; empty -> 1.0 everywhere
  double e_max = 1.0 - 1e-9;
  /// Funnels for stages 2..N; empty -> auto-sized from the initial state.
  std::vector<FunnelSettings> funnels;

  friend bool operator==(const ControllerSettings&, const ControllerSettings&) = default;
};

struct ScenarioSpec {
  std::size_t dims = 0;
  Box arena;
  double horizon = 0.0;
  double epsilon = 0.0;
  std::vector<AgentTask> agents;
  std::vector<UnsafeRegion> obstacles;

  PlantSettings plant;
  DisturbanceSettings disturbance;
  ControllerSettings controller;

  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/// U(t) for a single region. Static regions return their only box;
/// piecewise-linear ones interpolate lo/hi per axis and hold the last box.
/// Throws DomainError when t is outside [0, horizon].
Box unsafe_box_at(const UnsafeRegion& region, double t, double horizon);

/// Default gamma_d: half the narrower of the start and goal widths.
double default_min_width(const AgentTask& task, std::size_t dim);

/// Throws ValidationError naming the first violated invariant.
void validate_scenario(const ScenarioSpec& spec);

ScenarioSpec parse_scenario(const std::string& text);
std::string dump_scenario(const ScenarioSpec& spec);

/// Reads and validates a scenario file. ParseError / ValidationError.
ScenarioSpec load_scenario(const std::filesystem::path& path);
void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path);

}  // namespace stt

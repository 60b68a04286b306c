#pragma once

#include <filesystem>
#include <string>

#include "stt/scenario.hpp"
#include "stt/tube.hpp"

namespace stt::test {

inline std::filesystem::path data(const std::string& name) { return std::filesystem::path(STT_SCENARIO_DIR) / name; }

inline ScenarioSpec robots() { return load_scenario(data("robots.scenario")); }
inline ScenarioSpec drones() { return load_scenario(data("drones.scenario")); }
inline TubeSet robots_published() { return load_tubes(data("robots_published.tubes")); }
inline TubeSet drones_published() { return load_tubes(data("drones_published.tubes")); }

inline Box box(std::initializer_list<Interval> axes) { return Box(std::vector<Interval>(axes)); }

/// One agent in a free square arena, start lower-left, goal upper-right.
inline ScenarioSpec single_agent(double horizon = 10.0, double epsilon = 0.01) {
  ScenarioSpec s;
  s.dims = 2;
  s.arena = box({{0, 10}, {0, 10}});
  s.horizon = horizon;
  s.epsilon = epsilon;
  AgentTask a;
  a.name = "solo";
  a.start = box({{1, 2}, {1, 2}});
  a.goal = box({{8, 9}, {8, 9}});
  a.tube_degree_per_dim = {2, 2};
  a.min_width_per_dim = {0.5, 0.5};
  s.agents.push_back(a);
  return s;
}

/// single_agent() with horizon 1 and a tube of width 1 drifting at 0.5 per
/// unit time in both dims; smooth enough for convergence-order checks.
inline std::pair<ScenarioSpec, TubeSet> drifting_tube() {
  ScenarioSpec s = single_agent(1.0, 0.01);
  s.plant.kind = "single_integrator";
  s.disturbance.kind = "zero";
  TubeSet t;
  t.horizon = 1.0;
  AgentTubes a;
  for (int i = 0; i < 2; ++i) {
    a.dims.push_back({TubeFace{{1.0, 0.5, 0.2}, FaceSide::kLower}, TubeFace{{2.0, 0.5, 0.2}, FaceSide::kUpper}});
    a.min_width.push_back(0.5);
  }
  t.agents.push_back(a);
  return {s, t};
}

}  // namespace stt::test

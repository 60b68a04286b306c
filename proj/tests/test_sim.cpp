#include <doctest.h>

#include <cmath>
#include <sstream>

#include "common.hpp"
#include "stt/errors.hpp"
#include "stt/sim.hpp"
#include "stt/verify.hpp"

using namespace stt;
using doctest::Approx;

namespace {

// Stage-1 state at t_c for a fixed-substep run of the drifting tube case.
std::vector<double> final_state(double dt, std::size_t substeps) {
  const auto [s, t] = test::drifting_tube();
  const PlantModel m = make_plant(s.plant, s.dims);
  SimConfig cfg;
  cfg.dt = dt;
  cfg.substeps = substeps;
  cfg.disturbance = {"zero", 0.0, 1};
  cfg.initial = {{1.2, 1.8}};
  const auto tr = run_closed_loop(s, t, m, cfg);
  REQUIRE(tr[0].status == RunStatus::kOk);
  return tr[0].output(tr[0].samples() - 1, 2);
}

}  // namespace

TEST_CASE("state at the tube centre of a fixed tube stays put") {
  ScenarioSpec s = test::single_agent(1.0);
  s.plant.kind = "single_integrator";
  TubeSet t;
  t.horizon = 1.0;
  AgentTubes a;
  for (int i = 0; i < 2; ++i) {
    a.dims.push_back({TubeFace{{1.0}, FaceSide::kLower}, TubeFace{{2.0}, FaceSide::kUpper}});
    a.min_width.push_back(0.5);
  }
  t.agents.push_back(a);
  SimConfig cfg;
  cfg.dt = 0.01;
  cfg.disturbance = {"zero", 0.0, 1};
  const auto tr = run_closed_loop(s, t, make_plant(s.plant, 2), cfg);
  REQUIRE(tr.size() == 1);
  CHECK(tr[0].status == RunStatus::kOk);
  CHECK(tr[0].samples() == 101);
  for (std::size_t k = 0; k < tr[0].samples(); ++k) {
    CHECK(tr[0].state(k)[0] == 1.5);
    CHECK(tr[0].state(k)[1] == 1.5);
  }
}

TEST_CASE("robots stay inside the published tubes") {
  const ScenarioSpec s = test::robots();
  const TubeSet t = test::robots_published();
  const PlantModel m = make_plant(s.plant, s.dims);
  SimConfig cfg;
  cfg.dt = 1e-3;
  cfg.controller.kappa = {1.0};
  cfg.disturbance = s.disturbance;
  const auto trajs = run_closed_loop(s, t, m, cfg);
  REQUIRE(trajs.size() == 4);
  for (const Trajectory& tr : trajs) {
    INFO("agent ", tr.agent + 1, ": ", tr.message);
    CHECK(tr.status == RunStatus::kOk);
    CHECK(tr.samples() == 10001);
    CHECK(tr.times.back() == 10.0);
    CHECK(check_containment(tr, t.agents[tr.agent]).passed);
    CHECK(tr.substeps >= 1);
  }
}

TEST_CASE("runs are deterministic and serial equals parallel") {
  const ScenarioSpec s = test::robots();
  const TubeSet t = test::robots_published();
  const PlantModel m = make_plant(s.plant, s.dims);
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.disturbance = s.disturbance;
  cfg.exec = Exec::kSerial;
  const auto a = run_closed_loop(s, t, m, cfg);
  cfg.exec = Exec::kParallel;
  const auto b = run_closed_loop(s, t, m, cfg);
  const auto c = run_closed_loop(s, t, m, cfg);
  for (std::size_t j = 0; j < a.size(); ++j) {
    CHECK(a[j].states == b[j].states);
    CHECK(a[j].inputs == b[j].inputs);
    CHECK(b[j].states == c[j].states);
  }
  cfg.disturbance.seed = 2;
  CHECK(run_closed_loop(s, t, m, cfg)[0].states != a[0].states);
}

TEST_CASE("RK4 error falls by about 16 per dt halving") {
  const std::vector<double> ref = final_state(1e-4, 1);
  double prev = 0.0;
  for (double dt : {0.05, 0.025, 0.0125}) {
    const std::vector<double> x = final_state(dt, 1);
    const double err = std::max(std::abs(x[0] - ref[0]), std::abs(x[1] - ref[1]));
    if (prev > 0.0) CHECK(prev / err >= 8.0);
    prev = err;
  }
}

TEST_CASE("auto substeps follow the stiffness bound") {
  const auto [s, t] = test::drifting_tube();
  const PlantModel m = make_plant(s.plant, s.dims);
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.controller.kappa = {3.0};
  cfg.disturbance = {"zero", 0.0, 1};
  const auto tr = run_closed_loop(s, t, m, cfg);
  const ControllerConfig c = agent_controller(m, t.agents[0], cfg, default_initial_state(m, t.agents[0]));
  const double rate = stiffness_bound(c, t.agents[0], 1.0);
  CHECK(rate == Approx(16.0 * 3.0 / 1.0));  // width 1 throughout
  CHECK(tr[0].substeps == static_cast<std::size_t>(std::ceil(0.1 * rate / kStiffStep)));
}

TEST_CASE("bad step sizes and mismatched inputs are rejected") {
  const auto [s, t] = test::drifting_tube();
  const PlantModel m = make_plant(s.plant, s.dims);
  SimConfig cfg;
  cfg.dt = 0.3;
  CHECK_THROWS_AS(run_closed_loop(s, t, m, cfg), ValidationError);
  cfg.dt = 0.0;
  CHECK_THROWS_AS(run_closed_loop(s, t, m, cfg), ValidationError);
  cfg.dt = 0.1;
  TubeSet longer = t;
  longer.horizon = 2.0;
  CHECK_THROWS_AS(run_closed_loop(s, longer, m, cfg), ValidationError);
}

TEST_CASE("a start outside the tube is recorded as a failed run") {
  const auto [s, t] = test::drifting_tube();
  SimConfig cfg;
  cfg.dt = 0.1;
  cfg.initial = {{5.0, 1.5}};
  const auto tr = run_closed_loop(s, t, make_plant(s.plant, s.dims), cfg);
  CHECK(tr[0].status == RunStatus::kIntegrityError);
  CHECK(tr[0].failure_time == 0.0);
  CHECK(tr[0].message.find("stage 1 dim 1") != std::string::npos);
}

TEST_CASE("trajectory CSV layout") {
  const auto [s, t] = test::drifting_tube();
  SimConfig cfg;
  cfg.dt = 0.5;
  cfg.disturbance = {"zero", 0.0, 1};
  const auto tr = run_closed_loop(s, t, make_plant(s.plant, s.dims), cfg);
  std::ostringstream out;
  write_trajectories_csv(tr, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,agent,x1,x2,u1,u2,e1,e2");
  std::getline(in, line);
  CHECK(line.rfind("0,0,1.5,1.5,", 0) == 0);
  std::size_t rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

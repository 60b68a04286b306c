#include <doctest.h>

#include "common.hpp"
#include "stt/errors.hpp"
#include "stt/scenario.hpp"

using namespace stt;
using stt::test::box;

TEST_CASE("robots scenario loads with the Table I layout") {
  const ScenarioSpec s = test::robots();
  CHECK(s.agents.size() == 4);
  CHECK(s.dims == 2);
  CHECK(s.horizon == 10.0);
  CHECK(s.arena == box({{0, 5}, {0, 5}}));
  CHECK(s.agents[0].start == box({{4.5, 5}, {0, 0.5}}));
  CHECK(s.agents[3].goal == box({{4.5, 5}, {4.5, 5}}));
  CHECK(s.plant.kind == "omnidirectional");
}

TEST_CASE("drones scenario loads with the published arena and obstacle") {
  const ScenarioSpec s = test::drones();
  CHECK(s.agents.size() == 4);
  CHECK(s.dims == 3);
  CHECK(s.horizon == 20.0);
  CHECK(s.arena == box({{0, 3}, {0, 3}, {0, 15}}));
  REQUIRE(s.obstacles.size() == 1);
  CHECK(unsafe_box_at(s.obstacles[0], 0.0, s.horizon) == box({{1, 2}, {0, 3}, {0, 3}}));
}

TEST_CASE("validation rejects a goal inside U(t_c)") {
  ScenarioSpec s = test::single_agent();
  UnsafeRegion r;
  r.keyframes.push_back({0.0, box({{7.5, 9.5}, {7.5, 9.5}})});
  s.obstacles.push_back(r);
  CHECK_THROWS_AS(validate_scenario(s), ValidationError);
}

TEST_CASE("validation rejects broken invariants one at a time") {
  auto expect_reject = [](auto mutate) {
    ScenarioSpec s = test::single_agent();
    mutate(s);
    CHECK_THROWS_AS(validate_scenario(s), ValidationError);
  };
  CHECK_NOTHROW(validate_scenario(test::single_agent()));
  expect_reject([](ScenarioSpec& s) { s.horizon = 0.0; });
  expect_reject([](ScenarioSpec& s) { s.epsilon = -1.0; });
  expect_reject([](ScenarioSpec& s) { s.agents.clear(); });
  expect_reject([](ScenarioSpec& s) { s.agents[0].start = box({{-1, 0.5}, {1, 2}}); });
  expect_reject([](ScenarioSpec& s) { s.agents[0].min_width_per_dim = {2.0, 0.5}; });
  expect_reject([](ScenarioSpec& s) { s.agents[0].tube_degree_per_dim = {2}; });
  expect_reject([](ScenarioSpec& s) {
    UnsafeRegion r;
    r.interpolation = Interpolation::kPiecewiseLinear;
    r.keyframes.push_back({5.0, box({{4, 5}, {4, 5}})});
    r.keyframes.push_back({5.0, box({{4, 5}, {4, 5}})});
    s.obstacles.push_back(r);
  });
  expect_reject([](ScenarioSpec& s) {
    UnsafeRegion r;
    r.keyframes.push_back({0.0, box({{1.5, 3}, {1.5, 3}})});  // covers part of the start box
    s.obstacles.push_back(r);
  });
}

TEST_CASE("unsafe_box_at interpolates keyframes and holds the last box") {
  UnsafeRegion r;
  r.interpolation = Interpolation::kPiecewiseLinear;
  r.keyframes.push_back({0.0, box({{0, 1}, {0, 1}})});
  r.keyframes.push_back({10.0, box({{2, 3}, {0, 1}})});
  CHECK(unsafe_box_at(r, 5.0, 10.0) == box({{1, 2}, {0, 1}}));
  CHECK(unsafe_box_at(r, 10.0, 10.0) == box({{2, 3}, {0, 1}}));

  UnsafeRegion early = r;
  early.keyframes[1].time = 4.0;
  CHECK(unsafe_box_at(early, 9.0, 10.0) == box({{2, 3}, {0, 1}}));

  UnsafeRegion fixed;
  fixed.keyframes.push_back({0.0, box({{1, 2}, {3, 4}})});
  CHECK(unsafe_box_at(fixed, 7.3, 10.0) == box({{1, 2}, {3, 4}}));

  CHECK_THROWS_AS(unsafe_box_at(r, -0.1, 10.0), DomainError);
  CHECK_THROWS_AS(unsafe_box_at(r, 10.1, 10.0), DomainError);
}

TEST_CASE("save then load is bit-exact") {
  for (const ScenarioSpec& s : {test::robots(), test::drones()}) {
    CHECK(parse_scenario(dump_scenario(s)) == s);
  }
  ScenarioSpec odd = test::single_agent();
  odd.epsilon = 0.1 + 0.2;  // not representable in short decimal
  odd.agents[0].min_width_per_dim = {1.0 / 3.0, 0.5};
  CHECK(parse_scenario(dump_scenario(odd)) == odd);
}

TEST_CASE("unsafe boxes stay inside the arena over a 1000-point grid") {
  for (const ScenarioSpec& s : {test::robots(), test::drones()}) {
    for (const UnsafeRegion& r : s.obstacles) {
      for (int k = 0; k <= 1000; ++k) {
        const double t = s.horizon * k / 1000.0;
        CHECK(s.arena.contains(unsafe_box_at(r, t, s.horizon)));
      }
    }
  }
}

TEST_CASE("default min width is half the narrower endpoint box") {
  AgentTask a;
  a.start = box({{0, 0.5}, {0, 2}});
  a.goal = box({{0, 1}, {0, 1}});
  CHECK(default_min_width(a, 0) == doctest::Approx(0.25));
  CHECK(default_min_width(a, 1) == doctest::Approx(0.5));
}

TEST_CASE("malformed files raise ParseError") {
  CHECK_THROWS_AS(parse_scenario("{ not json"), ParseError);
  CHECK_THROWS_AS(parse_scenario(R"({"dims": 2})"), ParseError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.scenario"), ParseError);
}

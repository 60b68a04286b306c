#include <doctest.h>

#include <cmath>
#include <random>

#include "common.hpp"
#include "stt/errors.hpp"
#include "stt/tube.hpp"

using namespace stt;
using doctest::Approx;

namespace {

TubeFace face(std::vector<double> c, FaceSide side = FaceSide::kLower) { return TubeFace{std::move(c), side}; }

// Max |gamma'| by brute force on a fine grid; never above the exact value.
double grid_slope(const TubeFace& f, double horizon, int n) {
  double best = 0.0;
  for (int k = 0; k <= n; ++k) best = std::max(best, std::abs(eval_face_derivative(f, horizon * k / n)));
  return best;
}

}  // namespace

TEST_CASE("published robot faces evaluate to their table entries") {
  const TubeSet t = test::robots_published();
  REQUIRE(t.agent_count() == 4);
  CHECK(t.horizon == 10.0);
  CHECK(eval_face(t.agents[0].dims[0].lower, 0.0) == 4.5);
  CHECK(eval_face(t.agents[0].dims[1].upper, 10.0) == Approx(0.5).epsilon(1e-12));
  CHECK(eval_face_derivative(t.agents[3].dims[0].lower, 0.0) == Approx(3.9463));
  CHECK(eval_face_derivative(t.agents[3].dims[0].upper, 0.0) == Approx(3.8711));
}

TEST_CASE("published drone faces evaluate to their table entries") {
  const TubeSet t = test::drones_published();
  REQUIRE(t.agent_count() == 4);
  CHECK(t.dims() == 3);
  CHECK(eval_face(t.agents[0].dims[0].upper, 10.0) == Approx(0.25 + 2.745 - 0.69));
}

TEST_CASE("analytic slope bound on hand-checked faces") {
  const TubeSet t = test::robots_published();
  CHECK(analytic_slope_bound(t.agents[3].dims[0].lower, 10.0) == Approx(3.9463));
  CHECK(analytic_slope_bound(t.agents[3].dims[0].upper, 10.0) == Approx(3.8711));
  CHECK(analytic_slope_bound(t.agents[0].dims[0].lower, 10.0) == Approx(0.8955));
  CHECK(analytic_slope_bound(face({1.0, -2.5}), 4.0) == 2.5);
  CHECK(analytic_slope_bound(face({7.0}), 4.0) == 0.0);
  // gamma' = 1 - 2t on [0, 2] peaks in magnitude at t = 2.
  CHECK(analytic_slope_bound(face({0.0, 1.0, -1.0}), 2.0) == Approx(3.0));
}

TEST_CASE("slope bound is sound and tight against a dense grid") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t degree = 1 + trial % 6;
    std::vector<double> coeffs(degree + 1);
    for (double& v : coeffs) v = c(rng);
    const TubeFace f = face(coeffs);
    const double bound = analytic_slope_bound(f, 3.0);
    const double grid = grid_slope(f, 3.0, 100000);
    CHECK(bound >= grid - 1e-12);
    if (degree <= 3) CHECK(bound == Approx(grid).epsilon(1e-6));
    else CHECK(bound <= grid * (1.0 + 1e-2) + 1e-9);
  }
}

TEST_CASE("derivative matches central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  std::uniform_real_distribution<double> tt(0.5, 9.5);
  const double h = 1e-6;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> coeffs(2 + trial % 4);
    for (double& v : coeffs) v = c(rng);
    const double t = tt(rng);
    const double fd = (eval_poly(coeffs, t + h) - eval_poly(coeffs, t - h)) / (2.0 * h);
    const double d = eval_poly_derivative(coeffs, t);
    CHECK(std::abs(fd - d) <= 1e-6 * std::max(1.0, std::abs(d)));
  }
}

TEST_CASE("real roots and face range") {
  // (t - 1)(t - 2)(t - 3)
  const std::vector<double> p = {-6.0, 11.0, -6.0, 1.0};
  const std::vector<double> r = real_roots_in(p, 0.0, 10.0);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == Approx(1.0));
  CHECK(r[1] == Approx(2.0));
  CHECK(r[2] == Approx(3.0));
  CHECK(real_roots_in(p, 1.5, 2.5).size() == 1);
  CHECK(real_roots_in(std::vector<double>{1.0, 0.0, 1.0}, -5.0, 5.0).empty());

  const FaceRange fr = face_range(face({0.0, 2.0, -1.0}), 3.0);  // 2t - t^2
  CHECK(fr.max == Approx(1.0));
  CHECK(fr.argmax == Approx(1.0));
  CHECK(fr.min == Approx(-3.0));
  CHECK(fr.argmin == Approx(3.0));
}

TEST_CASE("tube_box_at gives start boxes at t = 0") {
  const ScenarioSpec s = test::robots();
  const TubeSet t = test::robots_published();
  for (std::size_t j = 0; j < 4; ++j) {
    const Box b = tube_box_at(t, j, 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(b[i].lo == Approx(s.agents[j].start[i].lo));
      CHECK(b[i].hi == Approx(s.agents[j].start[i].hi));
    }
  }
}

TEST_CASE("a face pair narrower than its min width is an integrity error") {
  TubeSet t;
  t.horizon = 1.0;
  AgentTubes a;
  a.dims.push_back({face({0.0, 1.0}), face({0.2, 0.5}, FaceSide::kUpper)});  // width 0.2 - 0.5 t
  a.min_width = {0.1};
  t.agents.push_back(a);
  CHECK_NOTHROW(tube_box_at(t, 0, 0.1));
  CHECK_THROWS_AS(tube_box_at(t, 0, 0.5), IntegrityError);
  CHECK_THROWS_AS(check_tube_integrity(t, 1e-3), IntegrityError);
  t.agents[0].min_width = {0.01};
  CHECK_THROWS_AS(check_tube_integrity(t, 1e-3), IntegrityError);  // inverted near t = 1
}

TEST_CASE("published tubes keep their widths over the horizon") {
  CHECK_NOTHROW(check_tube_integrity(test::robots_published(), 1e-3));
  CHECK_NOTHROW(check_tube_integrity(test::drones_published(), 1e-3));
}

TEST_CASE("published endpoints sit within coefficient rounding of the boxes") {
  for (const auto& [s, t] : {std::pair{test::robots(), test::robots_published()},
                             std::pair{test::drones(), test::drones_published()}}) {
    for (std::size_t j = 0; j < t.agent_count(); ++j) {
      for (std::size_t i = 0; i < t.dims(); ++i) {
        const FacePair& p = t.agents[j].dims[i];
        CHECK(std::abs(eval_face(p.lower, 0.0) - s.agents[j].start[i].lo) <= 0.01);
        CHECK(std::abs(eval_face(p.upper, 0.0) - s.agents[j].start[i].hi) <= 0.01);
        // Rounded coefficients drift at t_c; validate_tubes measures how far.
        CHECK(std::isfinite(eval_face(p.lower, s.horizon)));
      }
    }
  }
}

TEST_CASE("tube files round-trip bit-exactly and reject bad input") {
  TubeSet t = test::robots_published();
  t.agents[0].dims[0].lower.coeffs[1] = 1.0 / 3.0;
  CHECK(parse_tubes(dump_tubes(t)) == t);
  CHECK_THROWS_AS(parse_tubes("[1, 2"), ParseError);
  CHECK_THROWS_AS(parse_tubes(R"({"basis": "chebyshev", "horizon": 1, "agents": []})"), ParseError);
}

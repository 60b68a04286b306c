#include <doctest.h>

#include <cmath>
#include <random>

#include "common.hpp"
#include "stt/control.hpp"
#include "stt/errors.hpp"

using namespace stt;
using doctest::Approx;

namespace {

TubeFace face(std::vector<double> c, FaceSide side) { return TubeFace{std::move(c), side}; }

// Constant tube [lo, hi] per dim.
AgentTubes flat_tubes(const std::vector<double>& lo, const std::vector<double>& hi) {
  AgentTubes a;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    a.dims.push_back({face({lo[i]}, FaceSide::kLower), face({hi[i]}, FaceSide::kUpper)});
    a.min_width.push_back(0.5 * (hi[i] - lo[i]));
  }
  return a;
}

ControllerConfig one_stage(double kappa, int g_sign = 1) {
  ControllerConfig c;
  c.kappa = {kappa};
  c.g_sign = g_sign;
  return c;
}

ControllerConfig two_stage(double k1, double k2, const Funnel& f) {
  ControllerConfig c;
  c.stages = 2;
  c.kappa = {k1, k2};
  c.funnels = {f};
  return c;
}

Funnel funnel(std::size_t n, double p, double q, double mu) {
  return Funnel{std::vector<double>(n, p), std::vector<double>(n, q), std::vector<double>(n, mu)};
}

}  // namespace

TEST_CASE("stage-1 error on hand examples") {
  CHECK(stage1_error({0.5}, {0.0}, {1.0})[0] == 0.0);
  CHECK(stage1_error({0.75}, {0.0}, {1.0})[0] == Approx(0.5));
  CHECK(stage1_error({0.0}, {0.0}, {1.0})[0] == Approx(-1.0));

  const TubeSet t = test::robots_published();
  const AgentTubes& r1 = t.agents[0];
  std::vector<double> lo, hi;
  for (const FacePair& p : r1.dims) {
    lo.push_back(eval_face(p.lower, 0.0));
    hi.push_back(eval_face(p.upper, 0.0));
  }
  const auto e = stage1_error({4.75, 0.25}, lo, hi);
  CHECK(e[0] == Approx(0.0).scale(1.0));
  CHECK(e[1] == Approx(0.0).scale(1.0));
}

TEST_CASE("transformed error, xi and stage output on hand examples") {
  CHECK(transform_error({0.5}, 0.999)[0] == Approx(std::log(3.0)));
  CHECK(transform_error({0.0}, 0.999)[0] == 0.0);
  CHECK(xi_matrix({0.0}, {0.5})[0] == Approx(8.0));
  CHECK(xi_matrix({0.5}, {1.0})[0] == Approx(16.0 / 3.0));
  CHECK_THROWS_AS(xi_matrix({0.0}, {0.0}), IntegrityError);

  const double r = stage_output(1.0, {std::log(3.0)}, {16.0 / 3.0})[0];
  CHECK(r == Approx(-5.859).epsilon(1e-4));
  CHECK(stage_output(-1.0, {std::log(3.0)}, {16.0 / 3.0})[0] == Approx(5.859).epsilon(1e-4));
}

TEST_CASE("clamping counts components beyond e_max") {
  std::size_t clamps = 0;
  const auto eps = transform_error({0.9999, -0.9999, 0.1}, 0.99, &clamps);
  CHECK(clamps == 2);
  CHECK(eps[0] == Approx(std::log(1.99 / 0.01)));
  CHECK(eps[1] == Approx(-std::log(1.99 / 0.01)));
}

TEST_CASE("funnel radius and stage-k error") {
  const Funnel f = funnel(1, 2.0, 0.5, 1.0);
  CHECK(f.radius(0, 0.0) == Approx(2.0));
  CHECK(f.radius(0, 1.0) == Approx(1.5 * std::exp(-1.0) + 0.5));
  CHECK(stage_k_error({1.0}, {0.512}, f, 1.0)[0] == Approx(0.46396).epsilon(1e-4));
  CHECK_THROWS_AS(funnel(1, 0.5, 0.5, 1.0).validate(), ValidationError);
  CHECK_THROWS_AS(funnel(1, 1.0, 0.5, 0.0).validate(), ValidationError);
}

TEST_CASE("stacked cascade equals the composed component functions") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.95, 0.95);
  std::uniform_real_distribution<double> tt(0.0, 10.0);
  const TubeSet tubes = test::robots_published();
  const Funnel f = funnel(2, 3.0, 0.2, 0.7);
  const ControllerConfig cfg = two_stage(2.0, 3.0, f);
  for (int trial = 0; trial < 300; ++trial) {
    const AgentTubes& a = tubes.agents[static_cast<std::size_t>(trial) % 4];
    const double t = tt(rng);
    std::vector<double> lo, hi, x1(2), x2(2);
    for (std::size_t i = 0; i < 2; ++i) {
      lo.push_back(eval_face(a.dims[i].lower, t));
      hi.push_back(eval_face(a.dims[i].upper, t));
      x1[i] = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * u(rng);
    }
    // Component route.
    const auto e1 = stage1_error(x1, lo, hi);
    const std::vector<double> gd = {hi[0] - lo[0], hi[1] - lo[1]};
    const auto r2 = stage_output(cfg.kappa[0], transform_error(e1, cfg.e_max), xi_matrix(e1, gd));
    for (std::size_t i = 0; i < 2; ++i) x2[i] = r2[i] + f.radius(i, t) * u(rng);
    const auto e2 = stage_k_error(x2, r2, f, t);
    const std::vector<double> rad = {f.radius(0, t), f.radius(1, t)};
    const auto expect = stage_output(cfg.kappa[1], transform_error(e2, cfg.e_max), xi_matrix(e2, rad));

    ControlTelemetry tel;
    const auto got = control_input({x1, x2}, a, cfg, t, &tel);
    REQUIRE(got.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(got[i] == Approx(expect[i]).epsilon(1e-12));
      CHECK(tel.e[0][i] == Approx(e1[i]).epsilon(1e-12));
      CHECK(tel.e[1][i] == Approx(e2[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("stage-1 output pushes the state toward the tube centre") {
  const AgentTubes a = flat_tubes({0.0}, {1.0});
  const ControllerConfig c = one_stage(1.0);
  double prev = 1e300;
  for (double x = 0.01; x < 1.0; x += 0.01) {
    const double r = control_input({{x}}, a, c, 0.0)[0];
    CHECK(r < prev);  // strictly decreasing in x
    prev = r;
    if (x < 0.5 - 1e-12) CHECK(r > 0.0);
    if (x > 0.5 + 1e-12) CHECK(r < 0.0);
  }
}

TEST_CASE("law is odd about the centre and flips with g_sign") {
  const AgentTubes a = flat_tubes({-1.0, 2.0}, {1.0, 4.0});
  for (double d : {0.1, 0.4, 0.9}) {
    const auto up = control_input({{d, 3.0 + d}}, a, one_stage(2.0), 0.0);
    const auto down = control_input({{-d, 3.0 - d}}, a, one_stage(2.0), 0.0);
    const auto flipped = control_input({{d, 3.0 + d}}, a, one_stage(2.0, -1), 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(up[i] == Approx(-down[i]));
      CHECK(flipped[i] == Approx(-up[i]));
    }
  }
}

TEST_CASE("each dim depends only on its own coordinate") {
  const AgentTubes a = flat_tubes({0.0, 0.0}, {1.0, 1.0});
  const auto base = control_input({{0.3, 0.6}}, a, one_stage(1.0), 0.0);
  const auto moved = control_input({{0.3, 0.9}}, a, one_stage(1.0), 0.0);
  CHECK(base[0] == moved[0]);
  CHECK(base[1] != moved[1]);
}

TEST_CASE("leaving the tube or funnel is an integrity error") {
  const AgentTubes a = flat_tubes({0.0}, {1.0});
  CHECK_THROWS_AS(control_input({{1.0}}, a, one_stage(1.0), 0.0), IntegrityError);
  CHECK_THROWS_AS(control_input({{-0.2}}, a, one_stage(1.0), 0.0), IntegrityError);
  const ControllerConfig c = two_stage(1.0, 1.0, funnel(1, 1.0, 0.1, 1.0));
  try {
    control_input({{0.5}, {5.0}}, a, c, 0.0);
    FAIL("expected a breach");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
  }
}

TEST_CASE("make_controller fills gains and sizes funnels") {
  const AgentTubes a = flat_tubes({0.0, 0.0}, {1.0, 1.0});
  ControllerSettings s;
  s.kappa = {2.0};
  const std::vector<std::vector<double>> init = {{0.25, 0.5}, {0.0, 0.0}};
  const ControllerConfig c = make_controller(s, 2, 1, a, init);
  CHECK(c.kappa == std::vector<double>{2.0, 2.0});
  REQUIRE(c.funnels.size() == 1);
  const auto r2 = control_input({init[0]}, a, one_stage(2.0), 0.0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(c.funnels[0].p[i] == Approx(2.0 * std::abs(init[1][i] - r2[i]) + 0.1));
    CHECK(c.funnels[0].q[i] == 0.05);
    CHECK(c.funnels[0].mu[i] == 1.0);
  }
  // The initial stage-2 state is strictly inside its funnel.
  ControlTelemetry tel;
  control_input(init, a, c, 0.0, &tel);
  for (double e : tel.e[1]) CHECK(std::abs(e) < 1.0);

  CHECK(make_controller({}, 1, 1, a, {init[0]}).kappa == std::vector<double>{1.0});
}

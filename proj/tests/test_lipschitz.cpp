#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "common.hpp"
#include "stt/errors.hpp"
#include "stt/lipschitz.hpp"

using namespace stt;
using doctest::Approx;

namespace {

TubeFace face(std::vector<double> c, FaceSide side = FaceSide::kLower) { return TubeFace{std::move(c), side}; }

// Draws from F(x) = exp(-((loc - x) / scale)^shape) by inversion.
std::vector<double> reverse_weibull_draws(double loc, double scale, double shape, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (double& x : out) {
    double v = u(rng);
    while (v <= 0.0) v = u(rng);
    x = loc - scale * std::pow(-std::log(v), 1.0 / shape);
  }
  return out;
}

double face_error(const TubeFace& f, double horizon, const SlopeSampleConfig& cfg) {
  const auto maxima = sample_face_maxima(f, horizon, cfg, 0, 0, Exec::kSerial);
  return std::abs(fit_reverse_weibull(maxima).location - analytic_slope_bound(f, horizon));
}

}  // namespace

TEST_CASE("slope samples on linear and constant faces") {
  std::mt19937_64 rng(3);
  CHECK(max_slope_sample(face({1.0, 2.0}), 5.0, 0.01, 100, rng) == Approx(2.0).epsilon(1e-9));
  CHECK(max_slope_sample(face({1.0, -2.0}), 5.0, 0.01, 100, rng) == Approx(2.0).epsilon(1e-9));
  CHECK(max_slope_sample(face({4.0}), 5.0, 0.01, 100, rng) == 0.0);
}

TEST_CASE("slope samples never exceed the analytic bound") {
  const TubeSet t = test::robots_published();
  const TubeFace& f = t.agents[3].dims[0].lower;
  std::mt19937_64 rng(17);
  for (int k = 0; k < 200; ++k) {
    const double s = max_slope_sample(f, 10.0, 0.01, 100, rng);
    CHECK(s > 0.0);
    CHECK(s <= 3.9463 + 1e-9);
  }
}

TEST_CASE("config validation and defaults") {
  CHECK(SlopeSampleConfig::defaults_for(20.0).alpha == Approx(0.02));
  SlopeSampleConfig bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.repetitions = 5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = {};
  bad.pair_count = 1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("fit on equal maxima is degenerate") {
  const WeibullFit f = fit_reverse_weibull(std::vector<double>(20, 1.5));
  CHECK(f.status == FitStatus::kDegenerate);
  CHECK(f.location == 1.5);
  CHECK_THROWS_AS(fit_reverse_weibull(std::vector<double>(9, 1.0)), ValidationError);
}

TEST_CASE("fit recovers a known reverse Weibull") {
  const WeibullFit f = fit_reverse_weibull(reverse_weibull_draws(5.0, 1.0, 2.0, 500, 42));
  CHECK(f.status == FitStatus::kConverged);
  CHECK(f.location == Approx(5.0).epsilon(0.02));
  CHECK(f.shape == Approx(2.0).epsilon(0.25));
  CHECK(f.scale == Approx(1.0).epsilon(0.15));
}

TEST_CASE("fit location never sits below the sample maximum") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto x = reverse_weibull_draws(3.0, 0.5, 1.0 + 0.2 * static_cast<double>(seed), 50, seed);
    const WeibullFit f = fit_reverse_weibull(x);
    CHECK(f.location >= *std::max_element(x.begin(), x.end()));
    CHECK(std::isfinite(f.log_likelihood));
  }
}

TEST_CASE("robot 4 face estimate is close to its analytic slope") {
  const TubeSet t = test::robots_published();
  SlopeSampleConfig cfg;
  const auto maxima = sample_face_maxima(t.agents[3].dims[0].lower, 10.0, cfg, 3, 0);
  REQUIRE(maxima.size() == cfg.repetitions);
  for (double m : maxima) {
    CHECK(m > 0.0);
    CHECK(m <= 3.9463 + 1e-9);
  }
  const WeibullFit f = fit_reverse_weibull(maxima);
  CHECK(f.location == Approx(3.9463).epsilon(0.05));
}

TEST_CASE("Table II estimate is within 5% of the analytic bounds") {
  const LipschitzEstimate e = estimate_L(test::robots_published(), SlopeSampleConfig{});
  CHECK(e.analytic_L_L == Approx(3.9463));
  CHECK(e.analytic_L_U == Approx(3.8711));
  CHECK(e.L_L == Approx(e.analytic_L_L).epsilon(0.05));
  CHECK(e.L_U == Approx(e.analytic_L_U).epsilon(0.05));
  CHECK(e.faces.size() == 4 * 2 * 2);
  for (const FaceEstimate& f : e.faces) {
    // Sanity envelope: at least the largest observed quotient, and not far
    // beyond the true slope.
    CHECK(f.fit.location >= *std::max_element(f.maxima.begin(), f.maxima.end()));
    CHECK(f.fit.location <= 1.25 * f.analytic + 1e-3);
  }
}

TEST_CASE("serial and parallel estimates are bit-identical and repeatable") {
  const TubeSet t = test::robots_published();
  SlopeSampleConfig cfg;
  cfg.rng_seed = 9;
  const LipschitzEstimate a = estimate_L(t, cfg, Exec::kSerial);
  const LipschitzEstimate b = estimate_L(t, cfg, Exec::kParallel);
  const LipschitzEstimate c = estimate_L(t, cfg, Exec::kParallel);
  REQUIRE(a.faces.size() == b.faces.size());
  for (std::size_t k = 0; k < a.faces.size(); ++k) {
    CHECK(a.faces[k].maxima == b.faces[k].maxima);
    CHECK(a.faces[k].fit.location == b.faces[k].fit.location);
    CHECK(b.faces[k].maxima == c.faces[k].maxima);
  }
  CHECK(a.L_L == b.L_L);
  CHECK(a.L_U == c.L_U);

  cfg.rng_seed = 10;
  CHECK(estimate_L(t, cfg).faces[0].maxima != a.faces[0].maxima);
}

TEST_CASE("error shrinks as alpha halves and sampling doubles") {
  const TubeFace f = test::robots_published().agents[3].dims[0].lower;
  double coarse = 0.0;
  double fine = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SlopeSampleConfig c;
    c.rng_seed = seed;
    coarse += face_error(f, 10.0, c);
    c.alpha /= 4.0;
    c.pair_count *= 4;
    c.repetitions *= 4;
    fine += face_error(f, 10.0, c);
  }
  CHECK(fine <= coarse);
}

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "stt/parallel.hpp"
#include "stt/tube.hpp"

namespace stt {

struct SlopeSampleConfig {
  double alpha = 0.01;             // max |t_k - t_m|
  std::size_t pair_count = 100;    // N-bar
  std::size_t repetitions = 50;    // R
  std::uint64_t rng_seed = 1;

  /// alpha = t_c / 1000, N-bar = 100, R = 50.
  static SlopeSampleConfig defaults_for(double horizon);
  /// Throws ValidationError unless alpha > 0, N-bar >= 2, R >= 10.
  void validate() const;
};

enum class FitStatus {
  kConverged,
  kDegenerate,    // all maxima equal; location is that value
  kConservative,  // no interior optimum; location is max(maxima)
};

const char* to_string(FitStatus s);

/// Reverse Weibull F(x) = exp(-((location - x) / scale)^shape), x <= location.
struct WeibullFit {
  double location = 0.0;
  double scale = 0.0;
  double shape = 0.0;
  double log_likelihood = 0.0;
  FitStatus status = FitStatus::kConverged;
};

/// Largest difference quotient over pair_count random pairs in [0, horizon]
/// with 0 < |t_k - t_m| <= alpha. Pairs with t_k == t_m are redrawn.
double max_slope_sample(const TubeFace& face, double horizon, double alpha, std::size_t pair_count,
                        std::mt19937_64& rng);

double max_slope_sample(const TubeFace& face, double horizon, const SlopeSampleConfig& cfg, std::uint64_t seed);

/// Three-parameter maximum-likelihood fit. The location is profiled: for a
/// fixed location the shape solves a monotone score equation and the scale
/// has a closed form; the profile is bracketed on a grid over
/// log(location - max) and refined by safeguarded Newton. Needs >= 10 values.
WeibullFit fit_reverse_weibull(const std::vector<double>& maxima);

struct FaceEstimate {
  std::size_t agent = 0;
  std::size_t dim = 0;
  FaceSide side = FaceSide::kLower;
  std::vector<double> maxima;  // R block maxima
  WeibullFit fit;
  double analytic = 0.0;       // analytic_slope_bound of the face
};

struct LipschitzEstimate {
  std::vector<FaceEstimate> faces;  // agent-major, then dim, lower before upper
  double L_L = 0.0;
  double L_U = 0.0;
  double analytic_L_L = 0.0;
  double analytic_L_U = 0.0;
};

/// Block maxima of one face. Repetition r uses its own generator seeded from
/// (rng_seed, agent, dim, side, r), so both paths give identical bits.
std::vector<double> sample_face_maxima(const TubeFace& face, double horizon, const SlopeSampleConfig& cfg,
                                       std::size_t agent, std::size_t dim, Exec exec = Exec::kParallel);

/// Location estimate per face; L_L and L_U are the maxima over lower and
/// upper faces of every agent and dim.
LipschitzEstimate estimate_L(const TubeSet& tubes, const SlopeSampleConfig& cfg, Exec exec = Exec::kParallel);

}  // namespace stt

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stt/scenario.hpp"

namespace stt {

enum class FaceSide { kLower, kUpper };

/// One tube boundary gamma(t) = sum_k coeffs[k] * t^k on [0, t_c].
struct TubeFace {
  std::vector<double> coeffs;
  FaceSide side = FaceSide::kLower;

  std::size_t degree() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
  friend bool operator==(const TubeFace&, const TubeFace&) = default;
};

struct FacePair {
  TubeFace lower;
  TubeFace upper;
  friend bool operator==(const FacePair&, const FacePair&) = default;
};

struct AgentTubes {
  std::vector<FacePair> dims;       // one pair per output dimension
  std::vector<double> min_width;    // gamma_{i,d}
  friend bool operator==(const AgentTubes&, const AgentTubes&) = default;
};

struct TubeSet {
  double horizon = 0.0;
  std::vector<AgentTubes> agents;

  std::size_t agent_count() const { return agents.size(); }
  std::size_t dims() const { return agents.empty() ? 0 : agents.front().dims.size(); }
  friend bool operator==(const TubeSet&, const TubeSet&) = default;
};

double eval_poly(std::span<const double> coeffs, double t);
double eval_poly_derivative(std::span<const double> coeffs, double t);

inline double eval_face(const TubeFace& face, double t) { return eval_poly(face.coeffs, t); }
inline double eval_face_derivative(const TubeFace& face, double t) {
  return eval_poly_derivative(face.coeffs, t);
}

/// Real roots of the polynomial inside [a, b], ascending.
std::vector<double> real_roots_in(std::span<const double> coeffs, double a, double b);

/// max over [0, horizon] of |gamma'(t)|.
///
/// Degree <= 3: exact, from the endpoints and the stationary point of
/// gamma'. Higher degrees: maximum over a 10^4-point grid plus h/2 times a
/// bound on |gamma''|, which over-approximates the true maximum.
double analytic_slope_bound(const TubeFace& face, double horizon);

struct FaceRange {
  double min = 0.0;
  double argmin = 0.0;
  double max = 0.0;
  double argmax = 0.0;
};

/// Exact min/max of a face over [0, horizon] from its stationary points.
FaceRange face_range(const TubeFace& face, double horizon);

/// Box [lower(t), upper(t)] per dim. Throws IntegrityError when a face pair is
/// inverted or narrower than its min width (beyond a 1e-9 rounding allowance).
Box tube_box_at(const TubeSet& tubes, std::size_t agent, double t);

/// Checks the width invariant on a uniform grid; IntegrityError on breach.
void check_tube_integrity(const TubeSet& tubes, double resolution);

TubeSet parse_tubes(const std::string& text);
std::string dump_tubes(const TubeSet& tubes);
TubeSet load_tubes(const std::filesystem::path& path);
void save_tubes(const TubeSet& tubes, const std::filesystem::path& path);

}  // namespace stt

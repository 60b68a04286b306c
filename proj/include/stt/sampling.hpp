#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "stt/scenario.hpp"

namespace stt {

enum class SampleKind {
  kFaceMin,  // y = lower corner of the box at t (its per-dim min faces)
  kFaceMax,  // y = upper corner
  kLattice,  // volumetric lattice node
};

struct UnsafeSample {
  double t = 0.0;
  std::vector<double> y;
  std::size_t region = 0;
  SampleKind kind = SampleKind::kFaceMin;
};

struct SampleSet {
  std::vector<double> time_samples;  // sorted
  std::vector<UnsafeSample> unsafe_samples;
  double epsilon = 0.0;
};

/// Uniform grid on [0, t_c] with N_t = ceil(t_c / (2 eps)) + 1 points, so
/// every t is within eps of a sample. When t_c <= 2 eps one sample at t_c/2
/// covers the horizon; a warning is printed.
std::vector<double> sample_time_grid(double horizon, double epsilon);

/// Face-reduced samples for box regions, (t, y) lattice for kLattice regions.
SampleSet sample_unsafe(const ScenarioSpec& spec);

struct CoverReport {
  bool covered = false;
  double worst_gap = 0.0;  // largest distance from a probe point to its nearest sample
};

/// Dense-grid check of the eps-net property. Time coverage is always checked;
/// lattice regions are additionally probed over (t, U(t)).
CoverReport verify_cover(const SampleSet& samples, const ScenarioSpec& spec, double grid_resolution);

/// CSV with columns t, y1..yn, region, kind.
void write_samples_csv(const SampleSet& samples, std::ostream& out);

}  // namespace stt

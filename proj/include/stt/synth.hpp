#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stt/lp.hpp"
#include "stt/parallel.hpp"
#include "stt/sampling.hpp"
#include "stt/scenario.hpp"
#include "stt/tube.hpp"

namespace stt {

/// Polynomial degree and min width per agent and dim.
struct TubeTemplate {
  std::vector<std::vector<int>> degree;
  std::vector<std::vector<double>> min_width;
};

/// Template from the scenario; degree_override replaces every degree.
TubeTemplate template_from(const ScenarioSpec& spec, std::optional<int> degree_override = std::nullopt);

/// Tube must avoid a box (lo/hi are its corners) or a single point (lo == hi)
/// at time t.
struct UnsafeDisjunction {
  std::size_t agent = 0;
  std::size_t region = 0;
  double t = 0.0;
  std::vector<double> lo;
  std::vector<double> hi;
  std::size_t sequence = 0;  // index into SopInstance::unsafe_sequences
};

/// Tubes of agents j < k must be separated at time t.
struct CollisionDisjunction {
  std::size_t j = 0;
  std::size_t k = 0;
  double t = 0.0;
  std::size_t sequence = 0;
};

/// side 0: tube of the first party below the second (below the obstacle for
/// unsafe rows, j below k for collision rows); side 1: above.
struct Disjunct {
  std::uint8_t dim = 0;
  std::uint8_t side = 0;
  friend bool operator==(const Disjunct&, const Disjunct&) = default;
};

struct DisjunctAssignment {
  std::vector<Disjunct> unsafe;
  std::vector<Disjunct> collision;
  friend bool operator==(const DisjunctAssignment&, const DisjunctAssignment&) = default;
};

/// One affine row sum_terms sign * face(tau) - slack <= rhs, in scaled time
/// tau = t / t_c.
struct SopRow {
  struct Term {
    std::size_t offset = 0;
    std::size_t ncoeff = 0;
    double sign = 0.0;
  };
  double tau = 0.0;
  Term terms[2];
  int nterms = 0;
  std::ptrdiff_t slack = -1;  // -1: hard row
  double rhs = 0.0;
};

enum class RowFamily { kWidth, kUnsafe, kCollision };

/// The sampled synthesis problem. Face variables are the coefficients of the
/// faces in scaled time; physical coefficients are a_k / t_c^k.
struct SopInstance {
  std::size_t agents = 0;
  std::size_t dims = 0;
  double horizon = 0.0;
  double eta_gap = 1e-6;
  Box arena;
  std::vector<Box> start;
  std::vector<Box> goal;
  TubeTemplate tmpl;

  std::size_t num_vars = 0;
  std::size_t eta_index = 0;
  /// face_offset[(j * dims + i) * 2 + side], side 0 lower, 1 upper.
  std::vector<std::size_t> face_offset;
  std::vector<std::size_t> face_ncoeff;
  std::vector<std::size_t> slack_index;  // [j * dims + i]

  std::vector<double> time_samples;
  std::vector<UnsafeDisjunction> unsafe;
  std::vector<CollisionDisjunction> collisions;
  /// Disjunction indices grouped per (agent, region) / per pair, in time order.
  std::vector<std::vector<std::size_t>> unsafe_sequences;
  std::vector<std::vector<std::size_t>> collision_sequences;

  /// Endpoint equalities and slack ordering; objective min eta.
  lp::LpProblem base;

  std::size_t width_rows() const { return agents * dims * time_samples.size(); }
  std::size_t row_count() const { return width_rows() + unsafe.size() + collisions.size(); }
  std::size_t face_index(std::size_t j, std::size_t i, int side) const { return (j * dims + i) * 2 + side; }
  std::vector<std::string> variable_names() const;
};

/// Throws SynthesisError when a degree cannot meet the endpoint equalities.
SopInstance build_sop(const ScenarioSpec& spec, const SampleSet& samples, const TubeTemplate& tmpl,
                      double eta_gap = 1e-6);

/// Straight-line reference heuristic. Unsafe disjuncts take the dim and side
/// of largest signed clearance, collision disjuncts the dim of largest
/// reference separation; ties go to the lowest dim.
DisjunctAssignment seed_assignment(const SopInstance& inst);

/// Row with canonical id: width rows first, then unsafe, then collision.
SopRow make_row(const SopInstance& inst, const DisjunctAssignment& a, std::size_t id);
RowFamily row_family(const SopInstance& inst, std::size_t id);

/// Row built from an explicit disjunct for an unsafe or collision disjunction.
SopRow unsafe_row(const SopInstance& inst, std::size_t d, Disjunct choice);
SopRow collision_row(const SopInstance& inst, std::size_t c, Disjunct choice);

double row_residual(const SopRow& row, const std::vector<double>& x);

/// Residual of every canonical row at x.
std::vector<double> scan_rows(const SopInstance& inst, const DisjunctAssignment& a, const std::vector<double>& x,
                              Exec exec = Exec::kParallel);

struct SolveOptions {
  std::size_t coarse_per_sequence = 12;
  std::size_t peaks_per_sequence = 4;
  std::size_t max_rounds = 200;
  double row_tol = 1e-9;
  /// Recompute the final LP point from an LU of its basis.
  bool polish = true;
  lp::LpOptions lp;
};

/// Final LP of a solve_sop call with its basis; opaque outside synth.
struct SopWarmState;

struct SopSolution {
  lp::LpStatus status = lp::LpStatus::kNumericalFailure;
  std::vector<double> x;
  double eta = 0.0;
  TubeSet tubes;
  /// Canonical ids in the final LP and their multipliers.
  std::vector<std::size_t> active;
  std::vector<double> active_duals;
  std::size_t rounds = 0;
  std::size_t lp_iterations = 0;
  double worst_row = 0.0;   // max residual over all canonical rows
  double worst_arena = 0.0; // max arena excess (hard family)
  /// Least sum of the per-face slacks at this eta; NaN until computed.
  double slack_sum = std::numeric_limits<double>::quiet_NaN();
  std::shared_ptr<const SopWarmState> warm_state;
};

/// Solves the SOP for a fixed assignment by row generation: a coarse subset
/// of rows, then violated local peaks of each sequence, until every sampled
/// row holds. Arena bounds are enforced at the exact face extrema.
SopSolution solve_sop(const SopInstance& inst, const DisjunctAssignment& a, const SolveOptions& opt = {},
                      const std::vector<std::size_t>& warm = {});

/// Same problem as solve_sop for assignment a, started from the final LP of
/// `from`: rows whose disjunct changed are relaxed out and replaced, then
/// dual simplex repairs the basis. Falls back to a fresh solve when `from`
/// has no LP state or has accumulated too many relaxed rows.
SopSolution solve_sop_from(const SopInstance& inst, const DisjunctAssignment& a, const SopSolution& from,
                           const SolveOptions& opt = {});

/// Least sum of the per-face slacks over solutions whose eta does not exceed
/// sol.eta. Breaks eta ties in the assignment search; the synthesized tubes
/// always come from the min-eta LP. +inf when the solve fails.
double slack_sum(const SopInstance& inst, const DisjunctAssignment& a, const SopSolution& sol,
                 const SolveOptions& opt = {});

TubeSet tubes_from(const SopInstance& inst, const std::vector<double>& x);

struct SynthesisCertificate {
  double eta_star = 0.0;
  double L_L = 0.0;
  double L_U = 0.0;
  double L = 0.0;
  double epsilon = 0.0;
  double margin = 0.0;
  bool passed = false;
  std::string lipschitz_source = "analytic";
};

/// L = max{L_L, L_U, L_L + L_U, L_L + 1, L_U + 1}.
double composite_lipschitz(double L_L, double L_U);

SynthesisCertificate certify(double eta_star, double L_L, double L_U, double epsilon,
                             const std::string& source = "analytic");
/// Analytic slope bounds of the faces feed the certificate.
SynthesisCertificate certify(double eta_star, const TubeSet& tubes, double epsilon);

std::string dump_certificate(const SynthesisCertificate& c);

struct RefineOptions {
  std::size_t beam_width = 8;       // candidate solves per batch
  std::size_t max_iterations = 200; // batches over the whole search
  std::size_t max_batches = 200;    // batches within one refine call
  std::size_t max_binding = 8;      // binding disjunctions that seed flips
  Exec exec = Exec::kParallel;
  SolveOptions solve;
};

/// One monotone local-search step from a solved assignment. First the greedy
/// move: each disjunction takes the disjunct of least residual at the current
/// x, which keeps x feasible. When that does not lower eta, window flips
/// around the binding disjunctions (ranked by their multipliers) are solved
/// in batches of beam_width; the first batch with an improvement wins.
/// Candidates are ranked by (eta, slack_sum), so a move that keeps eta but
/// frees other slacks is progress. Returns nullopt when nothing improves.
struct RefineStep {
  DisjunctAssignment assignment;
  SopSolution solution;
  bool greedy = false;
  std::size_t candidates = 0;
  std::size_t batches = 0;
};
std::optional<RefineStep> refine_assignment(const SopInstance& inst, const DisjunctAssignment& a,
                                            const SopSolution& sol, const RefineOptions& opt = {});

struct SynthesisResult {
  TubeSet tubes;
  SynthesisCertificate certificate;
  DisjunctAssignment assignment;
  double eta_star = 0.0;
  std::size_t iterations = 0;
  std::size_t lp_solves = 0;
  std::size_t time_samples = 0;
  std::size_t sampled_rows = 0;
  double worst_arena = 0.0;
  bool solved = false;
};

/// Full pipeline: sample, build, seed, solve, refine until certified or the
/// budget runs out. Never throws on a failed search; check certificate.passed.
SynthesisResult synthesize(const ScenarioSpec& spec, const TubeTemplate& tmpl, const RefineOptions& opt = {},
                           const DisjunctAssignment* seed = nullptr);

enum class RopFamily { kEndpoints, kArena, kWidth, kUnsafe, kCollision };
const char* to_string(RopFamily f);

struct FamilyCheck {
  RopFamily family = RopFamily::kEndpoints;
  double worst = -1e300;  // positive: violated
  double at_t = 0.0;
  std::size_t agent = 0;
  std::size_t other = 0;  // obstacle or second agent
  bool passed = true;
};

struct TubeValidation {
  std::vector<FamilyCheck> families;  // in RopFamily order
  double tolerance = 0.0;
  bool passed = true;
  const FamilyCheck& operator[](RopFamily f) const { return families[static_cast<int>(f)]; }
};

/// Dense-grid check of the robust families. Endpoint, arena and width pass
/// when worst <= tolerance + 1e-9; unsafe and collision are strict and pass
/// when worst < tolerance. For unsafe and collision, worst is the max over t
/// of the best separating-dim margin (negative means separated).
TubeValidation validate_tubes(const TubeSet& tubes, const ScenarioSpec& spec, double resolution,
                              double tolerance = 0.0, Exec exec = Exec::kParallel);

/// Exact box-pair separation margin: min over dims of
/// min(u_j - l_k, u_k - l_j). Negative iff the closed boxes are disjoint.
double separation_margin(const Box& a, const Box& b);

}  // namespace stt

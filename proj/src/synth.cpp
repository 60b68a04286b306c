#include "stt/synth.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json_util.hpp"

namespace stt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double poly_at(const double* a, std::size_t n, double tau) {
  double v = 0.0;
  for (std::size_t k = n; k-- > 0;) v = v * tau + a[k];
  return v;
}

}  // namespace

TubeTemplate template_from(const ScenarioSpec& spec, std::optional<int> degree_override) {
  TubeTemplate t;
  for (const auto& a : spec.agents) {
    std::vector<int> deg(spec.dims, 2);
    for (std::size_t i = 0; i < spec.dims && i < a.tube_degree_per_dim.size(); ++i) deg[i] = a.tube_degree_per_dim[i];
    if (degree_override) deg.assign(spec.dims, *degree_override);
    std::vector<double> w(spec.dims);
    for (std::size_t i = 0; i < spec.dims; ++i) {
      w[i] = i < a.min_width_per_dim.size() ? a.min_width_per_dim[i] : default_min_width(a, i);
    }
    t.degree.push_back(std::move(deg));
    t.min_width.push_back(std::move(w));
  }
  return t;
}

std::vector<std::string> SopInstance::variable_names() const {
  std::vector<std::string> names(num_vars);
  for (std::size_t j = 0; j < agents; ++j) {
    for (std::size_t i = 0; i < dims; ++i) {
      for (int s = 0; s < 2; ++s) {
        const std::size_t f = face_index(j, i, s);
        for (std::size_t k = 0; k < face_ncoeff[f]; ++k) {
          names[face_offset[f] + k] = (s == 0 ? "lo_" : "hi_") + std::to_string(j + 1) + "_" +
                                      std::to_string(i + 1) + "_" + std::to_string(k);
        }
      }
      names[slack_index[j * dims + i]] = "eta_" + std::to_string(j + 1) + "_" + std::to_string(i + 1);
    }
  }
  names[eta_index] = "eta";
  return names;
}

SopInstance build_sop(const ScenarioSpec& spec, const SampleSet& samples, const TubeTemplate& tmpl,
                      double eta_gap) {
  SopInstance inst;
  inst.agents = spec.agents.size();
  inst.dims = spec.dims;
  inst.horizon = spec.horizon;
  inst.eta_gap = eta_gap;
  inst.arena = spec.arena;
  inst.tmpl = tmpl;
  if (tmpl.degree.size() != inst.agents || tmpl.min_width.size() != inst.agents) {
    throw ValidationError("build_sop: template does not match agent count");
  }
  for (const auto& a : spec.agents) {
    inst.start.push_back(a.start);
    inst.goal.push_back(a.goal);
  }

  // Variable layout: per (agent, dim) lower coeffs, upper coeffs, slack; eta last.
  std::size_t v = 0;
  inst.face_offset.resize(inst.agents * inst.dims * 2);
  inst.face_ncoeff.resize(inst.agents * inst.dims * 2);
  inst.slack_index.resize(inst.agents * inst.dims);
  for (std::size_t j = 0; j < inst.agents; ++j) {
    if (tmpl.degree[j].size() != inst.dims || tmpl.min_width[j].size() != inst.dims) {
      throw ValidationError("build_sop: template dims mismatch for agent " + std::to_string(j + 1));
    }
    for (std::size_t i = 0; i < inst.dims; ++i) {
      const int deg = tmpl.degree[j][i];
      if (deg < 1) {
        throw SynthesisError("agent " + std::to_string(j + 1) + " dim " + std::to_string(i + 1) + ": degree " +
                             std::to_string(deg) +
                             " has too few coefficients for the start and goal equalities; raise the tube degree");
      }
      for (int s = 0; s < 2; ++s) {
        const std::size_t f = inst.face_index(j, i, s);
        inst.face_offset[f] = v;
        inst.face_ncoeff[f] = static_cast<std::size_t>(deg) + 1;
        v += inst.face_ncoeff[f];
      }
      inst.slack_index[j * inst.dims + i] = v++;
    }
  }
  inst.eta_index = v++;
  inst.num_vars = v;

  inst.base = lp::LpProblem(inst.num_vars);
  inst.base.objective[inst.eta_index] = 1.0;
  for (std::size_t j = 0; j < inst.agents; ++j) {
    for (std::size_t i = 0; i < inst.dims; ++i) {
      for (int s = 0; s < 2; ++s) {
        const std::size_t f = inst.face_index(j, i, s);
        const double at_start = s == 0 ? inst.start[j][i].lo : inst.start[j][i].hi;
        const double at_goal = s == 0 ? inst.goal[j][i].lo : inst.goal[j][i].hi;
        std::vector<double> row(inst.num_vars, 0.0);
        row[inst.face_offset[f]] = 1.0;
        inst.base.add_eq(row, at_start);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t k = 0; k < inst.face_ncoeff[f]; ++k) row[inst.face_offset[f] + k] = 1.0;
        inst.base.add_eq(row, at_goal);
      }
      std::vector<double> row(inst.num_vars, 0.0);
      row[inst.slack_index[j * inst.dims + i]] = 1.0;
      row[inst.eta_index] = -1.0;
      inst.base.add_ineq(row, -eta_gap);
    }
  }

  inst.time_samples = samples.time_samples;

  const std::size_t regions = spec.obstacles.size();
  inst.unsafe_sequences.resize(inst.agents * regions);
  for (std::size_t j = 0; j < inst.agents; ++j) {
    const auto& us = samples.unsafe_samples;
    for (std::size_t s = 0; s < us.size(); ++s) {
      UnsafeDisjunction d;
      d.agent = j;
      d.region = us[s].region;
      d.t = us[s].t;
      d.lo = us[s].y;
      d.hi = us[s].y;
      if (us[s].kind == SampleKind::kFaceMin) {
        if (s + 1 >= us.size() || us[s + 1].kind != SampleKind::kFaceMax || us[s + 1].region != us[s].region ||
            us[s + 1].t != us[s].t) {
          throw ValidationError("build_sop: face samples must come in min/max pairs");
        }
        d.hi = us[++s].y;
      }
      d.sequence = j * regions + d.region;
      inst.unsafe_sequences[d.sequence].push_back(inst.unsafe.size());
      inst.unsafe.push_back(std::move(d));
    }
  }
  for (std::size_t j = 0; j < inst.agents; ++j) {
    for (std::size_t k = j + 1; k < inst.agents; ++k) {
      std::vector<std::size_t> seq;
      for (double t : inst.time_samples) {
        seq.push_back(inst.collisions.size());
        inst.collisions.push_back({j, k, t, inst.collision_sequences.size()});
      }
      inst.collision_sequences.push_back(std::move(seq));
    }
  }
  return inst;
}

DisjunctAssignment seed_assignment(const SopInstance& inst) {
  auto ref = [&](std::size_t j, double t) {
    const auto s = inst.start[j].center();
    const auto g = inst.goal[j].center();
    std::vector<double> p(inst.dims);
    const double w = inst.horizon > 0.0 ? t / inst.horizon : 0.0;
    for (std::size_t i = 0; i < inst.dims; ++i) p[i] = s[i] + w * (g[i] - s[i]);
    return p;
  };
  DisjunctAssignment a;
  a.unsafe.reserve(inst.unsafe.size());
  for (const auto& d : inst.unsafe) {
    const auto p = ref(d.agent, d.t);
    Disjunct best;
    double best_c = -kInf;
    for (std::size_t i = 0; i < inst.dims; ++i) {
      const double below = d.lo[i] - p[i];
      const double above = p[i] - d.hi[i];
      if (below > best_c) best_c = below, best = {static_cast<std::uint8_t>(i), 0};
      if (above > best_c) best_c = above, best = {static_cast<std::uint8_t>(i), 1};
    }
    a.unsafe.push_back(best);
  }
  a.collision.reserve(inst.collisions.size());
  for (const auto& c : inst.collisions) {
    const auto pj = ref(c.j, c.t);
    const auto pk = ref(c.k, c.t);
    Disjunct best;
    double best_s = -1.0;
    for (std::size_t i = 0; i < inst.dims; ++i) {
      const double diff = pk[i] - pj[i];
      if (std::abs(diff) > best_s) {
        best_s = std::abs(diff);
        best = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(diff >= 0.0 ? 0 : 1)};
      }
    }
    a.collision.push_back(best);
  }
  return a;
}

namespace {

SopRow::Term face_term(const SopInstance& inst, std::size_t j, std::size_t i, int side, double sign) {
  const std::size_t f = inst.face_index(j, i, side);
  return {inst.face_offset[f], inst.face_ncoeff[f], sign};
}

}  // namespace

SopRow unsafe_row(const SopInstance& inst, std::size_t d, Disjunct choice) {
  const UnsafeDisjunction& u = inst.unsafe[d];
  SopRow r;
  r.tau = u.t / inst.horizon;
  r.nterms = 1;
  r.slack = static_cast<std::ptrdiff_t>(inst.slack_index[u.agent * inst.dims + choice.dim]);
  if (choice.side == 0) {
    r.terms[0] = face_term(inst, u.agent, choice.dim, 1, 1.0);
    r.rhs = u.lo[choice.dim];
  } else {
    r.terms[0] = face_term(inst, u.agent, choice.dim, 0, -1.0);
    r.rhs = -u.hi[choice.dim];
  }
  return r;
}

SopRow collision_row(const SopInstance& inst, std::size_t c, Disjunct choice) {
  const CollisionDisjunction& cd = inst.collisions[c];
  const std::size_t below = choice.side == 0 ? cd.j : cd.k;
  const std::size_t above = choice.side == 0 ? cd.k : cd.j;
  SopRow r;
  r.tau = cd.t / inst.horizon;
  r.nterms = 2;
  r.terms[0] = face_term(inst, below, choice.dim, 1, 1.0);
  r.terms[1] = face_term(inst, above, choice.dim, 0, -1.0);
  r.slack = static_cast<std::ptrdiff_t>(inst.slack_index[cd.j * inst.dims + choice.dim]);
  r.rhs = 0.0;
  return r;
}

RowFamily row_family(const SopInstance& inst, std::size_t id) {
  if (id < inst.width_rows()) return RowFamily::kWidth;
  if (id < inst.width_rows() + inst.unsafe.size()) return RowFamily::kUnsafe;
  return RowFamily::kCollision;
}

SopRow make_row(const SopInstance& inst, const DisjunctAssignment& a, std::size_t id) {
  const std::size_t nw = inst.width_rows();
  if (id < nw) {
    const std::size_t nt = inst.time_samples.size();
    const std::size_t ji = id / nt;
    const std::size_t r = id % nt;
    const std::size_t j = ji / inst.dims;
    const std::size_t i = ji % inst.dims;
    SopRow row;
    row.tau = inst.time_samples[r] / inst.horizon;
    row.nterms = 2;
    row.terms[0] = face_term(inst, j, i, 0, 1.0);
    row.terms[1] = face_term(inst, j, i, 1, -1.0);
    row.slack = static_cast<std::ptrdiff_t>(inst.slack_index[ji]);
    row.rhs = -inst.tmpl.min_width[j][i];
    return row;
  }
  id -= nw;
  if (id < inst.unsafe.size()) return unsafe_row(inst, id, a.unsafe[id]);
  id -= inst.unsafe.size();
  return collision_row(inst, id, a.collision[id]);
}

double row_residual(const SopRow& row, const std::vector<double>& x) {
  double v = -row.rhs;
  for (int k = 0; k < row.nterms; ++k) {
    const auto& t = row.terms[k];
    v += t.sign * poly_at(x.data() + t.offset, t.ncoeff, row.tau);
  }
  if (row.slack >= 0) v -= x[static_cast<std::size_t>(row.slack)];
  return v;
}

namespace {

std::vector<double> dense_row(const SopInstance& inst, const SopRow& row) {
  std::vector<double> out(inst.num_vars, 0.0);
  for (int k = 0; k < row.nterms; ++k) {
    const auto& t = row.terms[k];
    double p = 1.0;
    for (std::size_t c = 0; c < t.ncoeff; ++c, p *= row.tau) out[t.offset + c] += t.sign * p;
  }
  if (row.slack >= 0) out[static_cast<std::size_t>(row.slack)] -= 1.0;
  return out;
}

}  // namespace

std::vector<double> scan_rows(const SopInstance& inst, const DisjunctAssignment& a, const std::vector<double>& x,
                              Exec exec) {
  const std::size_t n = inst.row_count();
  std::vector<double> res(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel) num_threads(worker_count())
  for (std::ptrdiff_t id = 0; id < count; ++id) {
    const auto u = static_cast<std::size_t>(id);
    res[u] = row_residual(make_row(inst, a, u), x);
  }
  return res;
}

namespace {

// Every sequence of canonical row ids, in time order.
std::vector<std::vector<std::size_t>> row_sequences(const SopInstance& inst) {
  std::vector<std::vector<std::size_t>> seqs;
  const std::size_t nt = inst.time_samples.size();
  for (std::size_t ji = 0; ji < inst.agents * inst.dims; ++ji) {
    std::vector<std::size_t> s(nt);
    std::iota(s.begin(), s.end(), ji * nt);
    seqs.push_back(std::move(s));
  }
  const std::size_t base_u = inst.width_rows();
  for (const auto& seq : inst.unsafe_sequences) {
    if (seq.empty()) continue;
    std::vector<std::size_t> s;
    for (std::size_t d : seq) s.push_back(base_u + d);
    seqs.push_back(std::move(s));
  }
  const std::size_t base_c = base_u + inst.unsafe.size();
  for (const auto& seq : inst.collision_sequences) {
    std::vector<std::size_t> s;
    for (std::size_t c : seq) s.push_back(base_c + c);
    seqs.push_back(std::move(s));
  }
  return seqs;
}

struct ArenaRow {
  std::size_t face = 0;
  double tau = 0.0;
  bool upper_bound = false;  // face(tau) <= arena hi, else face(tau) >= arena lo
};

// Largest arena excess of any face; optionally collects the violated extrema.
double arena_excess(const SopInstance& inst, const std::vector<double>& x, double tol,
                    std::vector<ArenaRow>* out) {
  double worst = -kInf;
  for (std::size_t j = 0; j < inst.agents; ++j) {
    for (std::size_t i = 0; i < inst.dims; ++i) {
      for (int s = 0; s < 2; ++s) {
        const std::size_t f = inst.face_index(j, i, s);
        TubeFace face;
        face.coeffs.assign(x.begin() + static_cast<std::ptrdiff_t>(inst.face_offset[f]),
                           x.begin() + static_cast<std::ptrdiff_t>(inst.face_offset[f] + inst.face_ncoeff[f]));
        const FaceRange r = face_range(face, 1.0);
        const double below = inst.arena[i].lo - r.min;
        const double above = r.max - inst.arena[i].hi;
        worst = std::max({worst, below, above});
        if (out && below > tol) out->push_back({f, r.argmin, false});
        if (out && above > tol) out->push_back({f, r.argmax, true});
      }
    }
  }
  return worst;
}

constexpr double kEtaCapSlack = 1e-9;

// lp_row_id markers for rows that are not canonical sampled rows: arena
// rows and the eta cap, and rows relaxed out by a warm start.
constexpr std::ptrdiff_t kPlainRow = -1;
constexpr std::ptrdiff_t kRelaxedRow = -2;

// Interior arena rows hold the face this far inside the arena so that the
// drift of the true extremum between generated rows stays within row_tol.
// Endpoint values are pinned by the equalities and get no backoff.
constexpr double kArenaBackoff = 1e-8;
// Arena rows are hard, so their extrema are held to a tighter tolerance.
constexpr double kArenaTolFactor = 0.1;

SopRow arena_row(const SopInstance& inst, const ArenaRow& a) {
  const std::size_t i = (a.face / 2) % inst.dims;
  SopRow r;
  r.tau = a.tau;
  r.nterms = 1;
  r.terms[0] = {inst.face_offset[a.face], inst.face_ncoeff[a.face], a.upper_bound ? 1.0 : -1.0};
  const bool interior = a.tau > 0.0 && a.tau < 1.0;
  r.rhs = (a.upper_bound ? inst.arena[i].hi : -inst.arena[i].lo) - (interior ? kArenaBackoff : 0.0);
  return r;
}

}  // namespace

TubeSet tubes_from(const SopInstance& inst, const std::vector<double>& x) {
  TubeSet tubes;
  tubes.horizon = inst.horizon;
  for (std::size_t j = 0; j < inst.agents; ++j) {
    AgentTubes at;
    at.min_width = inst.tmpl.min_width[j];
    for (std::size_t i = 0; i < inst.dims; ++i) {
      FacePair p;
      for (int s = 0; s < 2; ++s) {
        const std::size_t f = inst.face_index(j, i, s);
        TubeFace face;
        face.side = s == 0 ? FaceSide::kLower : FaceSide::kUpper;
        double scale = 1.0;
        for (std::size_t k = 0; k < inst.face_ncoeff[f]; ++k, scale /= inst.horizon) {
          face.coeffs.push_back(x[inst.face_offset[f] + k] * scale);
        }
        (s == 0 ? p.lower : p.upper) = std::move(face);
      }
      at.dims.push_back(std::move(p));
    }
    tubes.agents.push_back(std::move(at));
  }
  return tubes;
}

namespace {

// Loads the starting rows of a row-generation solve: the warm ids, a coarse
// subset of every sequence and coarse arena rows that keep the faces bounded.
void seed_rows(const SopInstance& inst, const DisjunctAssignment& a, const SolveOptions& opt,
               const std::vector<std::size_t>& warm, lp::LpSolver& solver, std::set<std::size_t>& active,
               std::vector<std::ptrdiff_t>& lp_row_id) {
  active.insert(warm.begin(), warm.end());
  for (const auto& s : row_sequences(inst)) {
    const std::size_t c = std::min(opt.coarse_per_sequence, s.size());
    for (std::size_t q = 0; q < c; ++q) {
      const std::size_t pos = c == 1 ? s.size() / 2 : q * (s.size() - 1) / (c - 1);
      active.insert(s[pos]);
    }
  }
  for (std::size_t id : active) {
    const SopRow r = make_row(inst, a, id);
    solver.add_ineq(dense_row(inst, r), r.rhs);
    lp_row_id.push_back(static_cast<std::ptrdiff_t>(id));
  }
  const std::size_t coarse_t = std::max<std::size_t>(opt.coarse_per_sequence, 2);
  for (std::size_t f = 0; f < inst.face_offset.size(); ++f) {
    for (std::size_t q = 1; q + 1 < coarse_t; ++q) {
      const double tau = static_cast<double>(q) / static_cast<double>(coarse_t - 1);
      for (bool upper : {false, true}) {
        const SopRow r = arena_row(inst, {f, tau, upper});
        solver.add_ineq(dense_row(inst, r), r.rhs);
        lp_row_id.push_back(kPlainRow);
      }
    }
  }
}

// Solves and appends violated sampled peaks and arena extrema until none
// remain. lp_row_id maps LP inequality rows after the first `skip` to
// canonical ids, -1 for arena rows.
void generate(const SopInstance& inst, const DisjunctAssignment& a, const SolveOptions& opt,
              lp::LpSolver& solver, std::set<std::size_t>& active, std::vector<std::ptrdiff_t>& lp_row_id,
              std::size_t skip, SopSolution& sol) {
  const auto seqs = row_sequences(inst);
  for (sol.rounds = 1; sol.rounds <= opt.max_rounds; ++sol.rounds) {
    const lp::LpSolution s = solver.solve();
    sol.lp_iterations += s.iterations;
    sol.status = s.status;
    if (s.status != lp::LpStatus::kOptimal) return;
    sol.x = s.x;
    sol.eta = s.x[inst.eta_index];
    sol.active.clear();
    sol.active_duals.clear();
    for (std::size_t q = 0; q < lp_row_id.size(); ++q) {
      if (lp_row_id[q] < 0) continue;
      sol.active.push_back(static_cast<std::size_t>(lp_row_id[q]));
      sol.active_duals.push_back(s.ineq_duals[skip + q]);
    }

    const std::vector<double> res = scan_rows(inst, a, sol.x);
    sol.worst_row = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
    std::size_t added = 0;
    for (const auto& s_ids : seqs) {
      std::vector<std::pair<double, std::size_t>> peaks;
      for (std::size_t q = 0; q < s_ids.size(); ++q) {
        const double v = res[s_ids[q]];
        if (v <= opt.row_tol) continue;
        if (q > 0 && res[s_ids[q - 1]] > v) continue;
        if (q + 1 < s_ids.size() && res[s_ids[q + 1]] > v) continue;
        peaks.emplace_back(v, s_ids[q]);
      }
      std::sort(peaks.begin(), peaks.end(), [](const auto& l, const auto& r) {
        return l.first != r.first ? l.first > r.first : l.second < r.second;
      });
      for (std::size_t q = 0; q < peaks.size() && q < opt.peaks_per_sequence; ++q) {
        if (!active.insert(peaks[q].second).second) continue;
        const SopRow r = make_row(inst, a, peaks[q].second);
        solver.add_ineq(dense_row(inst, r), r.rhs);
        lp_row_id.push_back(static_cast<std::ptrdiff_t>(peaks[q].second));
        ++added;
      }
    }
    std::vector<ArenaRow> new_arena;
    sol.worst_arena = arena_excess(inst, sol.x, kArenaTolFactor * opt.row_tol, &new_arena);
    for (const auto& ar : new_arena) {
      const SopRow r = arena_row(inst, ar);
      solver.add_ineq(dense_row(inst, r), r.rhs);
      lp_row_id.push_back(kPlainRow);
    }
    added += new_arena.size();
    if (added == 0) break;
  }
}

}  // namespace

struct SopWarmState {
  lp::LpSolver solver;
  DisjunctAssignment assignment;
  std::set<std::size_t> active;
  std::vector<std::ptrdiff_t> lp_row_id;  // canonical id, kPlainRow or kRelaxedRow
  std::size_t skip = 0;                   // LP inequality rows before lp_row_id[0]
  std::size_t relaxed = 0;
};

namespace {

// Relaxed rows get this much extra room: far beyond any row value reachable
// inside the arena, so they never bind again.
double relax_room(const SopInstance& inst) {
  double span = 1.0;
  for (std::size_t i = 0; i < inst.dims; ++i) span = std::max(span, inst.arena[i].hi - inst.arena[i].lo);
  return 1e3 * span;
}

void polish_point(const SopInstance& inst, const DisjunctAssignment& a, const lp::LpSolver& solver,
                  SopSolution& sol) {
  const lp::LpSolution p = solver.polished();
  if (p.status != lp::LpStatus::kOptimal) return;
  sol.x = p.x;
  sol.eta = p.x[inst.eta_index];
  const std::vector<double> res = scan_rows(inst, a, sol.x);
  sol.worst_row = res.empty() ? 0.0 : *std::max_element(res.begin(), res.end());
  sol.worst_arena = arena_excess(inst, sol.x, kInf, nullptr);
}

void finish_solution(const SopInstance& inst, const DisjunctAssignment& a, const SolveOptions& opt,
                     SopSolution& sol, SopWarmState&& state) {
  if (sol.status != lp::LpStatus::kOptimal) return;
  if (opt.polish) polish_point(inst, a, state.solver, sol);
  sol.tubes = tubes_from(inst, sol.x);
  sol.warm_state = std::make_shared<const SopWarmState>(std::move(state));
}

}  // namespace

SopSolution solve_sop(const SopInstance& inst, const DisjunctAssignment& a, const SolveOptions& opt,
                      const std::vector<std::size_t>& warm) {
  if (a.unsafe.size() != inst.unsafe.size() || a.collision.size() != inst.collisions.size()) {
    throw ValidationError("solve_sop: assignment does not cover every disjunction");
  }
  SopSolution sol;
  SopWarmState st{lp::LpSolver(inst.base, opt.lp), a, {}, {}, inst.base.ineq.rows(), 0};
  seed_rows(inst, a, opt, warm, st.solver, st.active, st.lp_row_id);
  generate(inst, a, opt, st.solver, st.active, st.lp_row_id, st.skip, sol);
  finish_solution(inst, a, opt, sol, std::move(st));
  return sol;
}

SopSolution solve_sop_from(const SopInstance& inst, const DisjunctAssignment& a, const SopSolution& from,
                           const SolveOptions& opt) {
  if (a.unsafe.size() != inst.unsafe.size() || a.collision.size() != inst.collisions.size()) {
    throw ValidationError("solve_sop: assignment does not cover every disjunction");
  }
  const SopWarmState* prev = from.warm_state.get();
  if (!prev) return solve_sop(inst, a, opt, from.active);
  if (prev->relaxed > prev->active.size()) return solve_sop(inst, a, opt, from.active);

  SopWarmState st = *prev;
  st.assignment = a;
  const std::size_t base_u = inst.width_rows();
  const std::size_t base_c = base_u + inst.unsafe.size();
  const double room = relax_room(inst);
  std::vector<std::size_t> replaced;
  for (std::size_t q = 0; q < st.lp_row_id.size(); ++q) {
    if (st.lp_row_id[q] < 0) continue;
    const auto id = static_cast<std::size_t>(st.lp_row_id[q]);
    const bool changed = id >= base_c ? !(a.collision[id - base_c] == prev->assignment.collision[id - base_c])
                         : id >= base_u ? !(a.unsafe[id - base_u] == prev->assignment.unsafe[id - base_u])
                                        : false;
    if (!changed) continue;
    const std::size_t lp_row = st.skip + q;
    st.solver.set_ineq_rhs(lp_row, st.solver.problem().ineq_rhs[lp_row] + room);
    st.lp_row_id[q] = kRelaxedRow;
    ++st.relaxed;
    replaced.push_back(id);
  }
  for (std::size_t id : replaced) {
    const SopRow r = make_row(inst, a, id);
    st.solver.add_ineq(dense_row(inst, r), r.rhs);
    st.lp_row_id.push_back(static_cast<std::ptrdiff_t>(id));
  }
  SopSolution sol;
  generate(inst, a, opt, st.solver, st.active, st.lp_row_id, st.skip, sol);
  if (sol.status != lp::LpStatus::kOptimal) return solve_sop(inst, a, opt, from.active);
  finish_solution(inst, a, opt, sol, std::move(st));
  return sol;
}

double slack_sum(const SopInstance& inst, const DisjunctAssignment& a, const SopSolution& sol,
                 const SolveOptions& opt) {
  if (sol.status != lp::LpStatus::kOptimal) return kInf;
  std::vector<double> objective(inst.num_vars, 0.0);
  for (std::size_t v : inst.slack_index) objective[v] = 1.0;
  std::vector<double> cap(inst.num_vars, 0.0);
  cap[inst.eta_index] = 1.0;
  const double cap_rhs = sol.eta + kEtaCapSlack * std::max(1.0, std::abs(sol.eta));

  std::optional<SopWarmState> st;
  if (sol.warm_state && sol.warm_state->assignment == a) {
    st.emplace(*sol.warm_state);
    st->solver.set_objective(objective);
  } else {
    lp::LpProblem p = inst.base;
    p.objective = objective;
    st.emplace(SopWarmState{lp::LpSolver(std::move(p), opt.lp), a, {}, {}, inst.base.ineq.rows(), 0});
    seed_rows(inst, a, opt, sol.active, st->solver, st->active, st->lp_row_id);
  }
  st->solver.add_ineq(cap, cap_rhs);
  st->lp_row_id.push_back(kPlainRow);
  SopSolution second;
  generate(inst, a, opt, st->solver, st->active, st->lp_row_id, st->skip, second);
  if (second.status != lp::LpStatus::kOptimal) return kInf;
  double sum = 0.0;
  for (std::size_t v : inst.slack_index) sum += second.x[v];
  return sum;
}

double composite_lipschitz(double L_L, double L_U) {
  return std::max({L_L, L_U, L_L + L_U, L_L + 1.0, L_U + 1.0});
}

SynthesisCertificate certify(double eta_star, double L_L, double L_U, double epsilon, const std::string& source) {
  SynthesisCertificate c;
  c.eta_star = eta_star;
  c.L_L = L_L;
  c.L_U = L_U;
  c.L = composite_lipschitz(L_L, L_U);
  c.epsilon = epsilon;
  c.margin = eta_star + c.L * epsilon;
  c.passed = c.margin <= 0.0;
  c.lipschitz_source = source;
  return c;
}

SynthesisCertificate certify(double eta_star, const TubeSet& tubes, double epsilon) {
  double L_L = 0.0, L_U = 0.0;
  for (const auto& a : tubes.agents) {
    for (const auto& p : a.dims) {
      L_L = std::max(L_L, analytic_slope_bound(p.lower, tubes.horizon));
      L_U = std::max(L_U, analytic_slope_bound(p.upper, tubes.horizon));
    }
  }
  return certify(eta_star, L_L, L_U, epsilon, "analytic");
}

std::string dump_certificate(const SynthesisCertificate& c) {
  detail::json j;
  j["eta_star"] = c.eta_star;
  j["L_L"] = c.L_L;
  j["L_U"] = c.L_U;
  j["L"] = c.L;
  j["epsilon"] = c.epsilon;
  j["margin"] = c.margin;
  j["passed"] = c.passed;
  j["lipschitz_source"] = c.lipschitz_source;
  return j.dump(2) + "\n";
}

namespace {

constexpr double kImprove = 1e-9;
constexpr double kScoreImprove = 1e-7;

// Disjunct of least residual at x; the current one unless another is strictly better.
template <class RowFn>
Disjunct least_residual(const SopInstance& inst, Disjunct current, const std::vector<double>& x, RowFn row) {
  Disjunct best = current;
  double best_v = row_residual(row(current), x);
  for (std::size_t i = 0; i < inst.dims; ++i) {
    for (std::uint8_t s = 0; s < 2; ++s) {
      const Disjunct d{static_cast<std::uint8_t>(i), s};
      const double v = row_residual(row(d), x);
      if (v < best_v - 1e-12) best_v = v, best = d;
    }
  }
  return best;
}

DisjunctAssignment greedy(const SopInstance& inst, const DisjunctAssignment& a, const std::vector<double>& x) {
  DisjunctAssignment g = a;
  for (std::size_t d = 0; d < inst.unsafe.size(); ++d) {
    g.unsafe[d] = least_residual(inst, a.unsafe[d], x, [&](Disjunct c) { return unsafe_row(inst, d, c); });
  }
  for (std::size_t c = 0; c < inst.collisions.size(); ++c) {
    g.collision[c] =
        least_residual(inst, a.collision[c], x, [&](Disjunct ch) { return collision_row(inst, c, ch); });
  }
  return g;
}

struct Flip {
  bool collision = false;
  std::size_t first = 0;  // positions within the sequence, inclusive
  std::size_t last = 0;
  std::size_t sequence = 0;
  Disjunct to;
  friend bool operator==(const Flip&, const Flip&) = default;
};

SopRow disjunction_row(const SopInstance& inst, bool coll, std::size_t d, Disjunct c) {
  return coll ? collision_row(inst, d, c) : unsafe_row(inst, d, c);
}

// Constraint value without its slack: positive means the chosen disjunct is
// violated outright by the current tubes.
double raw_value(const SopRow& r, const std::vector<double>& x) {
  double v = row_residual(r, x);
  if (r.slack >= 0) v += x[static_cast<std::size_t>(r.slack)];
  return v;
}

// Candidate flips for the binding disjunctions, most promising first. Each
// binding disjunction contributes windows around it (the stretch where its
// disjunct fails outright, that stretch dilated, its same-choice run and the
// run's halves) crossed with every other disjunct.
std::vector<Flip> rank_flips(const SopInstance& inst, const DisjunctAssignment& a, const SopSolution& sol,
                             std::size_t max_binding) {
  struct Binding {
    double dual;
    std::size_t id;
  };
  std::vector<Binding> binding;
  for (std::size_t q = 0; q < sol.active.size(); ++q) {
    if (sol.active_duals[q] > 1e-12 && row_family(inst, sol.active[q]) != RowFamily::kWidth) {
      binding.push_back({sol.active_duals[q], sol.active[q]});
    }
  }
  std::sort(binding.begin(), binding.end(), [](const Binding& l, const Binding& r) {
    return l.dual != r.dual ? l.dual > r.dual : l.id < r.id;
  });
  if (binding.size() > max_binding) binding.resize(max_binding);

  std::vector<Flip> flips;
  auto push = [&](const Flip& f) {
    if (std::find(flips.begin(), flips.end(), f) == flips.end()) flips.push_back(f);
  };
  const std::size_t base_u = inst.width_rows();
  const std::size_t base_c = base_u + inst.unsafe.size();
  for (const Binding& b : binding) {
    const bool coll = b.id >= base_c;
    const std::size_t d = coll ? b.id - base_c : b.id - base_u;
    const std::size_t seq_id = coll ? inst.collisions[d].sequence : inst.unsafe[d].sequence;
    const auto& seq = coll ? inst.collision_sequences[seq_id] : inst.unsafe_sequences[seq_id];
    const auto& choice = coll ? a.collision : a.unsafe;
    const std::size_t len = seq.size();
    const std::size_t pos = static_cast<std::size_t>(std::find(seq.begin(), seq.end(), d) - seq.begin());

    std::size_t run_lo = pos, run_hi = pos;
    while (run_lo > 0 && choice[seq[run_lo - 1]] == choice[d]) --run_lo;
    while (run_hi + 1 < len && choice[seq[run_hi + 1]] == choice[d]) ++run_hi;
    auto failing = [&](std::size_t q) {
      return raw_value(disjunction_row(inst, coll, seq[q], choice[seq[q]]), sol.x) >= 0.0;
    };
    std::size_t v_lo = pos, v_hi = pos;
    while (v_lo > 0 && failing(v_lo - 1)) --v_lo;
    while (v_hi + 1 < len && failing(v_hi + 1)) ++v_hi;
    const std::size_t span = v_hi - v_lo + 1;
    const std::size_t w_lo = v_lo > span ? v_lo - span : 0;
    const std::size_t w_hi = std::min(len - 1, v_hi + span);

    std::vector<std::pair<double, Disjunct>> alts;
    for (std::size_t i = 0; i < inst.dims; ++i) {
      for (std::uint8_t s = 0; s < 2; ++s) {
        const Disjunct c{static_cast<std::uint8_t>(i), s};
        if (c == choice[d]) continue;
        alts.emplace_back(raw_value(disjunction_row(inst, coll, d, c), sol.x), c);
      }
    }
    std::stable_sort(alts.begin(), alts.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

    const std::pair<std::size_t, std::size_t> windows[] = {
        {v_lo, v_hi}, {w_lo, w_hi}, {run_lo, run_hi}, {run_lo, pos}, {pos, run_hi}};
    for (const auto& [lo, hi] : windows) {
      for (const auto& alt : alts) push(Flip{coll, lo, hi, seq_id, alt.second});
    }
  }
  return flips;
}

DisjunctAssignment apply_flip(const SopInstance& inst, DisjunctAssignment a, const Flip& f) {
  const auto& seq = f.collision ? inst.collision_sequences[f.sequence] : inst.unsafe_sequences[f.sequence];
  auto& choice = f.collision ? a.collision : a.unsafe;
  for (std::size_t q = f.first; q <= f.last; ++q) choice[seq[q]] = f.to;
  return a;
}

}  // namespace

std::optional<RefineStep> refine_assignment(const SopInstance& inst, const DisjunctAssignment& a,
                                            const SopSolution& sol, const RefineOptions& opt) {
  if (sol.status != lp::LpStatus::kOptimal) return std::nullopt;
  SolveOptions solve = opt.solve;
  solve.polish = false;
  RefineStep step;
  const double cur_eta = sol.eta;
  const double cur_score = std::isnan(sol.slack_sum) ? slack_sum(inst, a, sol, solve) : sol.slack_sum;
  // Lexicographic (eta, slack sum) descent; scores only matter on eta ties.
  auto ties = [&](const SopSolution& c) {
    return c.status == lp::LpStatus::kOptimal && c.eta >= cur_eta - kImprove && c.eta <= cur_eta + kImprove;
  };
  auto better = [&](const SopSolution& c) {
    if (c.status != lp::LpStatus::kOptimal) return false;
    if (c.eta < cur_eta - kImprove) return true;
    return ties(c) && c.slack_sum < cur_score - kScoreImprove;
  };
  auto precedes = [](const SopSolution& l, const SopSolution& r) {
    if (std::abs(l.eta - r.eta) > kImprove) return l.eta < r.eta;
    return l.slack_sum < r.slack_sum;
  };

  DisjunctAssignment base = greedy(inst, a, sol.x);
  SopSolution base_sol = sol;
  base_sol.slack_sum = cur_score;
  if (!(base == a)) {
    SopSolution g = solve_sop_from(inst, base, sol, solve);
    if (ties(g)) g.slack_sum = slack_sum(inst, base, g, solve);
    ++step.candidates;
    ++step.batches;
    if (better(g)) {
      step.assignment = std::move(base);
      step.solution = std::move(g);
      step.greedy = true;
      return step;
    }
    if (g.status == lp::LpStatus::kOptimal && g.eta <= cur_eta + kImprove) {
      base_sol = std::move(g);
    } else {
      base = a;
    }
  }

  const std::vector<Flip> flips = rank_flips(inst, base, base_sol, opt.max_binding);
  const std::size_t beam = std::max<std::size_t>(opt.beam_width, 1);
  for (std::size_t first = 0; first < flips.size() && step.batches < opt.max_batches; first += beam) {
    const std::size_t count = std::min(beam, flips.size() - first);
    std::vector<SopSolution> results(count);
    std::vector<DisjunctAssignment> assigns(count);
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic) if (opt.exec == Exec::kParallel) num_threads(worker_count())
    for (std::ptrdiff_t q = 0; q < n; ++q) {
      const auto u = static_cast<std::size_t>(q);
      assigns[u] = apply_flip(inst, base, flips[first + u]);
      results[u] = solve_sop_from(inst, assigns[u], base_sol, solve);
      if (ties(results[u])) results[u].slack_sum = slack_sum(inst, assigns[u], results[u], solve);
    }
    step.candidates += count;
    ++step.batches;
    std::size_t best = count;
    for (std::size_t q = 0; q < count; ++q) {
      if (better(results[q]) && (best == count || precedes(results[q], results[best]))) best = q;
    }
    if (best < count) {
      step.assignment = std::move(assigns[best]);
      step.solution = std::move(results[best]);
      return step;
    }
  }
  return std::nullopt;
}

SynthesisResult synthesize(const ScenarioSpec& spec, const TubeTemplate& tmpl, const RefineOptions& opt,
                           const DisjunctAssignment* seed) {
  SynthesisResult out;
  const SampleSet samples = sample_unsafe(spec);
  const SopInstance inst = build_sop(spec, samples, tmpl);
  out.time_samples = inst.time_samples.size();
  out.sampled_rows = inst.row_count();

  DisjunctAssignment a = seed ? *seed : seed_assignment(inst);
  SopSolution sol = solve_sop(inst, a, opt.solve);
  out.lp_solves = 1;
  if (sol.status != lp::LpStatus::kOptimal) return out;

  SynthesisCertificate cert = certify(sol.eta, sol.tubes, spec.epsilon);
  while (!cert.passed && out.iterations < opt.max_iterations) {
    RefineOptions o = opt;
    o.max_batches = std::min(opt.max_batches, opt.max_iterations - out.iterations);
    auto step = refine_assignment(inst, a, sol, o);
    if (!step) break;
    out.iterations += step->batches;
    out.lp_solves += step->candidates;
    a = std::move(step->assignment);
    sol = std::move(step->solution);
    cert = certify(sol.eta, sol.tubes, spec.epsilon);
  }
  if (opt.solve.polish && out.iterations > 0 && sol.warm_state) {
    polish_point(inst, a, sol.warm_state->solver, sol);
    sol.tubes = tubes_from(inst, sol.x);
    cert = certify(sol.eta, sol.tubes, spec.epsilon);
  }
  out.solved = true;
  out.tubes = sol.tubes;
  out.certificate = cert;
  out.assignment = std::move(a);
  out.eta_star = sol.eta;
  out.worst_arena = sol.worst_arena;
  return out;
}

const char* to_string(RopFamily f) {
  switch (f) {
    case RopFamily::kEndpoints: return "endpoints";
    case RopFamily::kArena: return "arena";
    case RopFamily::kWidth: return "width";
    case RopFamily::kUnsafe: return "unsafe";
    case RopFamily::kCollision: return "collision";
  }
  return "unknown";
}

double separation_margin(const Box& a, const Box& b) {
  double m = kInf;
  for (std::size_t i = 0; i < a.dims(); ++i) m = std::min({m, a[i].hi - b[i].lo, b[i].hi - a[i].lo});
  return m;
}

namespace {

struct GridWorst {
  double worst = -kInf;
  std::size_t agent = 0;
  std::size_t other = 0;
};

void consider(GridWorst& g, double v, std::size_t agent, std::size_t other) {
  if (v > g.worst) g = {v, agent, other};
}

void merge(FamilyCheck& f, const GridWorst& g, double t) {
  if (g.worst > f.worst) {
    f.worst = g.worst;
    f.at_t = t;
    f.agent = g.agent;
    f.other = g.other;
  }
}

Box raw_box(const AgentTubes& a, double t) {
  Box b;
  for (const auto& p : a.dims) b.axes.push_back({eval_face(p.lower, t), eval_face(p.upper, t)});
  return b;
}

}  // namespace

TubeValidation validate_tubes(const TubeSet& tubes, const ScenarioSpec& spec, double resolution, double tolerance,
                              Exec exec) {
  if (!(resolution > 0.0)) throw DomainError("validate_tubes: resolution must be positive");
  if (tubes.agent_count() != spec.agents.size() || tubes.dims() != spec.dims) {
    throw ValidationError("validate_tubes: tube set does not match the scenario");
  }
  TubeValidation v;
  v.tolerance = tolerance;
  for (int f = 0; f < 5; ++f) v.families.push_back({static_cast<RopFamily>(f)});
  auto& endpoints = v.families[0];
  auto& arena = v.families[1];

  const double tc = spec.horizon;
  for (std::size_t j = 0; j < tubes.agent_count(); ++j) {
    const auto& a = tubes.agents[j];
    for (std::size_t i = 0; i < spec.dims; ++i) {
      const auto& task = spec.agents[j];
      const double dev[4] = {
          std::abs(eval_face(a.dims[i].lower, 0.0) - task.start[i].lo),
          std::abs(eval_face(a.dims[i].upper, 0.0) - task.start[i].hi),
          std::abs(eval_face(a.dims[i].lower, tc) - task.goal[i].lo),
          std::abs(eval_face(a.dims[i].upper, tc) - task.goal[i].hi),
      };
      for (int q = 0; q < 4; ++q) {
        if (dev[q] > endpoints.worst) endpoints = {RopFamily::kEndpoints, dev[q], q < 2 ? 0.0 : tc, j, i};
      }
      for (const TubeFace* face : {&a.dims[i].lower, &a.dims[i].upper}) {
        const FaceRange r = face_range(*face, tc);
        const double below = spec.arena[i].lo - r.min;
        const double above = r.max - spec.arena[i].hi;
        if (below > arena.worst) arena = {RopFamily::kArena, below, r.argmin, j, i};
        if (above > arena.worst) arena = {RopFamily::kArena, above, r.argmax, j, i};
      }
    }
  }

  const auto steps = static_cast<std::size_t>(std::ceil(tc / resolution));
  struct PerTime {
    GridWorst width, unsafe, collision;
  };
  std::vector<PerTime> per(steps + 1);
  const auto count = static_cast<std::ptrdiff_t>(steps + 1);
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel) num_threads(worker_count())
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    const double t = std::min(tc, static_cast<double>(k) * resolution);
    PerTime& pt = per[static_cast<std::size_t>(k)];
    std::vector<Box> boxes;
    for (const auto& a : tubes.agents) boxes.push_back(raw_box(a, t));
    for (std::size_t j = 0; j < boxes.size(); ++j) {
      for (std::size_t i = 0; i < spec.dims; ++i) {
        consider(pt.width, boxes[j][i].lo - boxes[j][i].hi + tubes.agents[j].min_width[i], j, i);
      }
      for (std::size_t o = 0; o < spec.obstacles.size(); ++o) {
        consider(pt.unsafe, separation_margin(boxes[j], unsafe_box_at(spec.obstacles[o], t, tc)), j, o);
      }
      for (std::size_t k2 = j + 1; k2 < boxes.size(); ++k2) {
        consider(pt.collision, separation_margin(boxes[j], boxes[k2]), j, k2);
      }
    }
  }
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = std::min(tc, static_cast<double>(k) * resolution);
    merge(v.families[2], per[k].width, t);
    merge(v.families[3], per[k].unsafe, t);
    merge(v.families[4], per[k].collision, t);
  }

  for (auto& f : v.families) {
    const bool strict = f.family == RopFamily::kUnsafe || f.family == RopFamily::kCollision;
    f.passed = strict ? f.worst < tolerance : f.worst <= tolerance + 1e-9;
    v.passed = v.passed && f.passed;
  }
  return v;
}

}  // namespace stt

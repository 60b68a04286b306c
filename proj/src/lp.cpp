#include "stt/lp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "stt/errors.hpp"

namespace stt::lp {

void Matrix::append_row(const std::vector<double>& values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw ValidationError("lp: row length does not match column count");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

LpProblem::LpProblem(std::size_t num_vars)
    : objective(num_vars, 0.0), ineq(0, num_vars), eq(0, num_vars) {}

void LpProblem::add_ineq(const std::vector<double>& row, double rhs) {
  if (row.size() != num_vars()) throw ValidationError("lp: inequality row has wrong length");
  ineq.append_row(row);
  ineq_rhs.push_back(rhs);
}

void LpProblem::add_eq(const std::vector<double>& row, double rhs) {
  if (row.size() != num_vars()) throw ValidationError("lp: equality row has wrong length");
  eq.append_row(row);
  eq_rhs.push_back(rhs);
}

void LpProblem::validate() const {
  const std::size_t n = num_vars();
  if (ineq.rows() > 0 && ineq.cols() != n) throw ValidationError("lp: inequality matrix column mismatch");
  if (eq.rows() > 0 && eq.cols() != n) throw ValidationError("lp: equality matrix column mismatch");
  if (ineq.rows() != ineq_rhs.size()) throw ValidationError("lp: inequality rhs length mismatch");
  if (eq.rows() != eq_rhs.size()) throw ValidationError("lp: equality rhs length mismatch");
  if (!variable_names.empty() && variable_names.size() != n) {
    throw ValidationError("lp: variable name count mismatch");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(objective.begin(), objective.end(), finite) ||
      !std::all_of(ineq_rhs.begin(), ineq_rhs.end(), finite) ||
      !std::all_of(eq_rhs.begin(), eq_rhs.end(), finite)) {
    throw ValidationError("lp: non-finite objective or rhs");
  }
  for (std::size_t r = 0; r < ineq.rows(); ++r) {
    if (!std::all_of(ineq.row(r), ineq.row(r) + n, finite)) throw ValidationError("lp: non-finite entry");
  }
  for (std::size_t r = 0; r < eq.rows(); ++r) {
    if (!std::all_of(eq.row(r), eq.row(r) + n, finite)) throw ValidationError("lp: non-finite entry");
  }
}

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kIterationLimit: return "iteration_limit";
    case LpStatus::kNumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double max_violation(const LpProblem& p, const std::vector<double>& x) {
  double worst = 0.0;
  const std::size_t n = p.num_vars();
  for (std::size_t r = 0; r < p.ineq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += p.ineq(r, j) * x[j];
    worst = std::max(worst, s - p.ineq_rhs[r]);
  }
  for (std::size_t r = 0; r < p.eq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += p.eq(r, j) * x[j];
    worst = std::max(worst, std::abs(s - p.eq_rhs[r]));
  }
  return worst;
}

// Worst row residual relative to max(1, |rhs|), so rows with large
// right-hand sides do not loosen the check on the others.
double relative_violation(const LpProblem& p, const std::vector<double>& x) {
  double worst = 0.0;
  const std::size_t n = p.num_vars();
  for (std::size_t r = 0; r < p.ineq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += p.ineq(r, j) * x[j];
    worst = std::max(worst, (s - p.ineq_rhs[r]) / std::max(1.0, std::abs(p.ineq_rhs[r])));
  }
  for (std::size_t r = 0; r < p.eq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += p.eq(r, j) * x[j];
    worst = std::max(worst, std::abs(s - p.eq_rhs[r]) / std::max(1.0, std::abs(p.eq_rhs[r])));
  }
  return worst;
}

}  // namespace

// Columns are [x+ | x- | artificials | one slack per inequality row]. Each
// standard row is factor * (original row) plus its slack or artificial.
struct LpSolver::Impl {
  struct StdRow {
    double factor = 1.0;
    double slack_sign = 1.0;
    std::ptrdiff_t art = -1;  // artificial column offset, -1 if none
    bool eq = false;
    std::size_t orig = 0;     // index among ineq or eq rows
  };

  LpProblem prob;
  LpOptions opt;
  std::size_t n = 0;
  std::size_t n_art = 0;
  std::vector<StdRow> rows;

  // Tableau: m rows with capacity `stride` columns; rhs kept apart.
  std::size_t cols = 0;
  std::size_t stride = 0;
  std::vector<double> t;
  std::vector<double> rhs;
  std::vector<double> cost2, cost1;  // reduced costs, phase 2 / phase 1
  double z2 = 0.0, z1 = 0.0;         // minus the objective values
  std::vector<std::size_t> basis;
  std::vector<std::ptrdiff_t> pos_of;  // column -> basis row or -1
  std::vector<double> nz_val;
  std::vector<std::size_t> nz_idx;

  bool ready = false;          // tableau holds an optimal basis
  std::size_t pending = 0;     // ineq rows not yet in the tableau
  std::size_t iterations = 0;

  std::size_t m() const { return rows.size(); }
  double* row(std::size_t r) { return t.data() + r * stride; }
  const double* row(std::size_t r) const { return t.data() + r * stride; }
  bool is_art(std::size_t j) const { return j >= 2 * n && j < 2 * n + n_art; }
  std::size_t slack_col(std::size_t ineq_index) const { return 2 * n + n_art + ineq_index; }

  const double* orig_row(const StdRow& s) const { return s.eq ? prob.eq.row(s.orig) : prob.ineq.row(s.orig); }
  double orig_rhs(const StdRow& s) const { return s.eq ? prob.eq_rhs[s.orig] : prob.ineq_rhs[s.orig]; }

  double column_cost(std::size_t j) const {
    if (j < n) return prob.objective[j];
    if (j < 2 * n) return -prob.objective[j - n];
    return 0.0;
  }

  static double row_scale(const double* a, std::size_t n) {
    double mx = 0.0;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, std::abs(a[j]));
    return mx > 0.0 ? 1.0 / mx : 1.0;
  }

  void reserve_cols(std::size_t need) {
    if (need <= stride) return;
    std::size_t ns = std::max<std::size_t>(need, stride * 2);
    std::vector<double> nt(m() * ns, 0.0);
    for (std::size_t r = 0; r < m(); ++r) std::copy(row(r), row(r) + cols, nt.data() + r * ns);
    t.swap(nt);
    stride = ns;
    cost1.resize(ns, 0.0);
    cost2.resize(ns, 0.0);
  }

  void build() {
    n = prob.num_vars();
    const std::size_t mi = prob.ineq.rows();
    const std::size_t me = prob.eq.rows();
    rows.clear();
    n_art = 0;
    for (std::size_t r = 0; r < mi + me; ++r) {
      StdRow s;
      s.eq = r >= mi;
      s.orig = s.eq ? r - mi : r;
      const double b = orig_rhs(s);
      const double sign = b < 0.0 ? -1.0 : 1.0;
      s.factor = sign * row_scale(orig_row(s), n);
      s.slack_sign = sign;
      if (s.eq || sign < 0.0) s.art = static_cast<std::ptrdiff_t>(n_art++);
      rows.push_back(s);
    }
    cols = 2 * n + n_art + mi;
    stride = cols + 16;
    t.assign(m() * stride, 0.0);
    rhs.assign(m(), 0.0);
    basis.assign(m(), 0);
    pos_of.assign(stride, -1);
    cost1.assign(stride, 0.0);
    cost2.assign(stride, 0.0);
    for (std::size_t r = 0; r < m(); ++r) {
      const StdRow& s = rows[r];
      const double* a = orig_row(s);
      double* out = row(r);
      for (std::size_t j = 0; j < n; ++j) {
        out[j] = s.factor * a[j];
        out[n + j] = -s.factor * a[j];
      }
      if (!s.eq) out[slack_col(s.orig)] = s.slack_sign;
      rhs[r] = s.factor * orig_rhs(s);
      if (s.art >= 0) {
        out[2 * n + static_cast<std::size_t>(s.art)] = 1.0;
        basis[r] = 2 * n + static_cast<std::size_t>(s.art);
      } else {
        basis[r] = slack_col(s.orig);
      }
    }
    for (std::size_t j = 0; j < cols; ++j) cost2[j] = column_cost(j);
    for (std::size_t j = 2 * n; j < 2 * n + n_art; ++j) cost1[j] = 1.0;
    z1 = z2 = 0.0;
    for (std::size_t r = 0; r < m(); ++r) {
      const std::size_t bj = basis[r];
      pos_of[bj] = static_cast<std::ptrdiff_t>(r);
      for (auto [c, z] : {std::pair{&cost1, &z1}, std::pair{&cost2, &z2}}) {
        const double f = (*c)[bj];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) (*c)[j] -= f * row(r)[j];
        *z -= f * rhs[r];
      }
    }
    pending = 0;
    iterations = 0;
  }

  // primal: basic values are kept nonnegative, so values pushed below zero
  // by round-off are reset before they can steer a later pivot.
  void pivot(std::size_t p, std::size_t q, bool primal) {
    double* pr = row(p);
    if (primal) rhs[p] = std::max(0.0, rhs[p]);
    const double inv = 1.0 / pr[q];
    nz_idx.clear();
    for (std::size_t j = 0; j < cols; ++j) {
      if (pr[j] != 0.0) {
        pr[j] *= inv;
        nz_idx.push_back(j);
      }
    }
    pr[q] = 1.0;
    rhs[p] *= inv;
    const double bp = rhs[p];
    // Dense rows take the contiguous loop, which vectorizes.
    const bool dense = 4 * nz_idx.size() > cols;
    for (std::size_t r = 0; r < m(); ++r) {
      if (r == p) continue;
      double* rr = row(r);
      const double f = rr[q];
      if (f == 0.0) continue;
      if (dense) {
        for (std::size_t j = 0; j < cols; ++j) rr[j] -= f * pr[j];
      } else {
        for (std::size_t j : nz_idx) rr[j] -= f * pr[j];
      }
      rr[q] = 0.0;
      rhs[r] -= f * bp;
      if (primal && rhs[r] < 0.0) rhs[r] = 0.0;
    }
    for (auto [c, z] : {std::pair{&cost1, &z1}, std::pair{&cost2, &z2}}) {
      const double f = (*c)[q];
      if (f == 0.0) continue;
      for (std::size_t j : nz_idx) (*c)[j] -= f * pr[j];
      (*c)[q] = 0.0;
      *z -= f * bp;
    }
    pos_of[basis[p]] = -1;
    basis[p] = q;
    pos_of[q] = static_cast<std::ptrdiff_t>(p);
  }

  LpStatus primal(bool phase_one, std::size_t limit) {
    const std::vector<double>& cost = phase_one ? cost1 : cost2;
    bool bland = false;
    std::size_t degenerate_run = 0;
    while (true) {
      if (iterations >= limit) return LpStatus::kIterationLimit;
      std::size_t q = cols;
      double best = -opt.optimality_tol;
      for (std::size_t j = 0; j < cols; ++j) {
        if (!phase_one && is_art(j)) continue;
        if (cost[j] < best) {
          q = j;
          if (bland) break;
          best = cost[j];
        }
      }
      if (q == cols) return LpStatus::kOptimal;

      // Two-pass ratio test. The first pass bounds the step with every basic
      // value relaxed by the feasibility tolerance; the second picks, among
      // rows within that bound, the largest pivot element (Bland: the
      // smallest basic index) so tiny pivots are avoided.
      double bound = kInf;
      for (std::size_t r = 0; r < m(); ++r) {
        const double a = row(r)[q];
        if (a > opt.pivot_tol) bound = std::min(bound, (std::max(0.0, rhs[r]) + opt.ratio_tol) / a);
      }
      std::size_t p = m();
      double step = kInf;
      for (std::size_t r = 0; r < m(); ++r) {
        const double a = row(r)[q];
        if (a <= opt.pivot_tol) continue;
        const double ratio = std::max(0.0, rhs[r]) / a;
        if (ratio > bound) continue;
        if (p == m() || (bland ? basis[r] < basis[p] : a > row(p)[q])) {
          p = r;
          step = ratio;
        }
      }
      if (p == m()) return LpStatus::kUnbounded;
      if (step <= 1e-12) {
        if (++degenerate_run >= opt.degenerate_switch) bland = true;
      } else {
        degenerate_run = 0;
      }
      pivot(p, q, true);
      ++iterations;
    }
  }

  // Restores primal feasibility from a dual-feasible basis.
  LpStatus dual(std::size_t limit) {
    bool bland = false;
    std::size_t degenerate_run = 0;
    while (true) {
      if (iterations >= limit) return LpStatus::kIterationLimit;
      std::size_t p = m();
      double worst = -opt.feasibility_tol;
      for (std::size_t r = 0; r < m(); ++r) {
        if (rhs[r] < worst) {
          p = r;
          if (bland) break;
          worst = rhs[r];
        }
      }
      if (p == m()) return LpStatus::kOptimal;

      const double* pr = row(p);
      double bound = kInf;
      for (std::size_t j = 0; j < cols; ++j) {
        if (is_art(j) || pos_of[j] >= 0) continue;
        const double a = pr[j];
        if (a < -opt.pivot_tol) bound = std::min(bound, (std::max(0.0, cost2[j]) + opt.optimality_tol) / -a);
      }
      std::size_t q = cols;
      double step = kInf;
      for (std::size_t j = 0; j < cols; ++j) {
        if (is_art(j) || pos_of[j] >= 0) continue;
        const double a = pr[j];
        if (a >= -opt.pivot_tol) continue;
        const double ratio = std::max(0.0, cost2[j]) / -a;
        if (ratio > bound) continue;
        if (q == cols || (!bland && -a > -pr[q])) {
          q = j;
          step = ratio;
        }
      }
      if (q == cols) return LpStatus::kInfeasible;
      if (step <= 1e-12) {
        if (++degenerate_run >= opt.degenerate_switch) bland = true;
      } else {
        degenerate_run = 0;
      }
      pivot(p, q, false);
      ++iterations;
    }
  }

  // After phase one, swap zero-level artificials out of the basis where a
  // structural or slack column can replace them.
  void drive_out_artificials() {
    for (std::size_t r = 0; r < m(); ++r) {
      if (!is_art(basis[r])) continue;
      std::size_t q = cols;
      double best = opt.pivot_tol;
      for (std::size_t j = 0; j < cols; ++j) {
        if (is_art(j)) continue;
        if (std::abs(row(r)[j]) > best) {
          best = std::abs(row(r)[j]);
          q = j;
        }
      }
      if (q == cols) continue;
      // The artificial sits at zero within tolerance; pivoting on its exact
      // level would push that residue through a possibly small pivot.
      rhs[r] = 0.0;
      pivot(r, q, true);
    }
  }

  // Prices pending inequality rows into the tableau with their slacks basic.
  void absorb_pending() {
    const std::size_t mi = prob.ineq.rows();
    reserve_cols(cols + pending);
    for (std::size_t i = mi - pending; i < mi; ++i) {
      StdRow s;
      s.orig = i;
      s.factor = row_scale(prob.ineq.row(i), n);
      rows.push_back(s);
      const std::size_t r = m() - 1;
      t.resize(m() * stride, 0.0);
      rhs.push_back(s.factor * prob.ineq_rhs[i]);
      basis.push_back(slack_col(i));
      const std::size_t sc = slack_col(i);
      if (pos_of.size() < stride) pos_of.resize(stride, -1);
      cols = std::max(cols, sc + 1);
      double* out = row(r);
      std::fill(out, out + stride, 0.0);
      const double* a = prob.ineq.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        out[j] = s.factor * a[j];
        out[n + j] = -s.factor * a[j];
      }
      out[sc] = 1.0;
      pos_of[sc] = static_cast<std::ptrdiff_t>(r);
      for (std::size_t j = 0; j < 2 * n; ++j) {
        const double f = out[j];
        if (f == 0.0 || pos_of[j] < 0) continue;
        const auto pr = static_cast<std::size_t>(pos_of[j]);
        const double* src = row(pr);
        for (std::size_t k = 0; k < cols; ++k) {
          if (k != sc) out[k] -= f * src[k];
        }
        rhs[r] -= f * rhs[pr];
      }
      for (std::size_t j = 0; j < 2 * n; ++j) {
        if (pos_of[j] >= 0) out[j] = 0.0;
      }
    }
    pending = 0;
  }

  // Moves the rhs of a tableau inequality row. Basic values shift along
  // B^-1 e_r, read off the row's initial basic column; reduced costs are
  // untouched, so the basis stays dual feasible.
  void set_ineq_rhs(std::size_t i, double b) {
    const double old = prob.ineq_rhs[i];
    prob.ineq_rhs[i] = b;
    const std::size_t mi = prob.ineq.rows();
    if (!ready || i >= mi - pending) return;
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const StdRow& s) { return !s.eq && s.orig == i; });
    const StdRow& s = *it;
    const std::size_t col = s.art >= 0 ? 2 * n + static_cast<std::size_t>(s.art) : slack_col(i);
    const double coef = s.art >= 0 ? 1.0 : s.slack_sign;
    const double delta = s.factor * (b - old) / coef;
    for (std::size_t r = 0; r < m(); ++r) rhs[r] += delta * row(r)[col];
    z2 += cost2[col] * delta;
  }

  // Reprices the current basis for a new objective; it stays primal feasible.
  void set_objective(std::vector<double> c) {
    prob.objective = std::move(c);
    if (!ready) return;
    for (std::size_t j = 0; j < cols; ++j) cost2[j] = is_art(j) ? 0.0 : column_cost(j);
    z2 = 0.0;
    for (std::size_t r = 0; r < m(); ++r) {
      const double f = cost2[basis[r]];
      if (f == 0.0) continue;
      const double* rr = row(r);
      for (std::size_t j = 0; j < cols; ++j) cost2[j] -= f * rr[j];
      z2 -= f * rhs[r];
    }
  }

  // Rebuilds the tableau, basic values and reduced costs from the original
  // rows for the current basis, discarding accumulated round-off. False when
  // the basis matrix is numerically singular.
  bool reinvert() {
    const std::size_t mm = m();
    if (mm == 0) return true;
    const auto M = static_cast<Eigen::Index>(mm);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(M, static_cast<Eigen::Index>(cols));
    Eigen::VectorXd b(M);
    for (std::size_t r = 0; r < mm; ++r) {
      const StdRow& s = rows[r];
      const double* a = orig_row(s);
      const auto R = static_cast<Eigen::Index>(r);
      for (std::size_t j = 0; j < n; ++j) {
        S(R, static_cast<Eigen::Index>(j)) = s.factor * a[j];
        S(R, static_cast<Eigen::Index>(n + j)) = -s.factor * a[j];
      }
      if (s.art >= 0) S(R, static_cast<Eigen::Index>(2 * n + static_cast<std::size_t>(s.art))) = 1.0;
      if (!s.eq) S(R, static_cast<Eigen::Index>(slack_col(s.orig))) = s.slack_sign;
      b(R) = s.factor * orig_rhs(s);
    }
    Eigen::MatrixXd B(M, M);
    for (std::size_t k = 0; k < mm; ++k) B.col(static_cast<Eigen::Index>(k)) = S.col(static_cast<Eigen::Index>(basis[k]));
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    if (!(lu.rcond() > 1e-14)) return false;
    const Eigen::MatrixXd T = lu.solve(S);
    const Eigen::VectorXd xb = lu.solve(b);
    if (!T.allFinite() || !xb.allFinite()) return false;
    for (std::size_t r = 0; r < mm; ++r) {
      double* out = row(r);
      std::fill(out, out + stride, 0.0);
      for (std::size_t j = 0; j < cols; ++j) out[j] = T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      rhs[r] = xb(static_cast<Eigen::Index>(r));
    }
    for (std::size_t r = 0; r < mm; ++r) {
      for (std::size_t k = 0; k < mm; ++k) row(k)[basis[r]] = k == r ? 1.0 : 0.0;
    }
    for (std::size_t j = 0; j < cols; ++j) {
      cost2[j] = is_art(j) ? 0.0 : column_cost(j);
      cost1[j] = is_art(j) ? 1.0 : 0.0;
    }
    z1 = z2 = 0.0;
    for (std::size_t r = 0; r < mm; ++r) {
      const double* rr = row(r);
      for (auto [c, z] : {std::pair{&cost1, &z1}, std::pair{&cost2, &z2}}) {
        const double f = (*c)[basis[r]];
        if (f == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) (*c)[j] -= f * rr[j];
        *z -= f * rhs[r];
      }
    }
    return true;
  }

  LpSolution extract(LpStatus status) {
    LpSolution sol;
    sol.status = status;
    sol.iterations = iterations;
    if (status != LpStatus::kOptimal) return sol;
    std::vector<double> value(cols, 0.0);
    for (std::size_t r = 0; r < m(); ++r) value[basis[r]] = rhs[r];
    sol.x.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) sol.x[j] = value[j] - value[n + j];

    // Row multipliers from the reduced costs of each row's initial basic
    // column: d = -coef * y for a unit-like column of zero cost.
    sol.ineq_duals.assign(prob.ineq.rows(), 0.0);
    sol.eq_duals.assign(prob.eq.rows(), 0.0);
    for (const StdRow& s : rows) {
      double y;
      if (s.eq || s.art >= 0) {
        y = -cost2[2 * n + static_cast<std::size_t>(s.art)];
      } else {
        y = -cost2[slack_col(s.orig)] / s.slack_sign;
      }
      const double lambda = y * s.factor;
      (s.eq ? sol.eq_duals : sol.ineq_duals)[s.orig] = -lambda;
    }
    for (double& mu : sol.ineq_duals) mu = std::max(0.0, mu);
    sol.objective_value = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective_value += prob.objective[j] * sol.x[j];
    sol.max_violation = max_violation(prob, sol.x);
    return sol;
  }

  // Re-solves the basis on the original data when the tableau has drifted.
  void refactor(LpSolution& sol) const {
    const std::size_t mm = m();
    Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mm), static_cast<Eigen::Index>(mm));
    Eigen::VectorXd b(static_cast<Eigen::Index>(mm));
    Eigen::VectorXd cb(static_cast<Eigen::Index>(mm));
    for (std::size_t r = 0; r < mm; ++r) {
      const StdRow& s = rows[r];
      const double* a = orig_row(s);
      b(static_cast<Eigen::Index>(r)) = s.factor * orig_rhs(s);
      for (std::size_t k = 0; k < mm; ++k) {
        const std::size_t j = basis[k];
        double v = 0.0;
        if (j < n) {
          v = s.factor * a[j];
        } else if (j < 2 * n) {
          v = -s.factor * a[j - n];
        } else if (is_art(j)) {
          v = s.art == static_cast<std::ptrdiff_t>(j - 2 * n) ? 1.0 : 0.0;
        } else {
          v = (!s.eq && slack_col(s.orig) == j) ? s.slack_sign : 0.0;
        }
        bmat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = v;
      }
    }
    for (std::size_t k = 0; k < mm; ++k) cb(static_cast<Eigen::Index>(k)) = column_cost(basis[k]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    const Eigen::VectorXd xb = lu.solve(b);
    const Eigen::VectorXd y = lu.transpose().solve(cb);
    if (!xb.allFinite() || !y.allFinite()) {
      sol.status = LpStatus::kNumericalFailure;
      return;
    }
    std::vector<double> value(cols, 0.0);
    for (std::size_t k = 0; k < mm; ++k) value[basis[k]] = xb(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < n; ++j) sol.x[j] = value[j] - value[n + j];
    for (std::size_t r = 0; r < mm; ++r) {
      const StdRow& s = rows[r];
      const double lambda = y(static_cast<Eigen::Index>(r)) * s.factor;
      (s.eq ? sol.eq_duals : sol.ineq_duals)[s.orig] = s.eq ? -lambda : std::max(0.0, -lambda);
    }
    sol.objective_value = 0.0;
    for (std::size_t j = 0; j < n; ++j) sol.objective_value += prob.objective[j] * sol.x[j];
    sol.max_violation = max_violation(prob, sol.x);
  }

  std::size_t limit() const {
    return opt.max_iterations ? opt.max_iterations : 50 * (m() + pending + cols) + 1000;
  }

  LpStatus cold() {
    build();
    if (m() == 0) return LpStatus::kOptimal;
    LpStatus st = primal(true, limit());
    if (st == LpStatus::kIterationLimit) return st;
    if (!reinvert()) return LpStatus::kNumericalFailure;
    for (double& v : rhs) v = std::max(0.0, v);
    double b_scale = 1.0;
    for (std::size_t r = 0; r < m(); ++r) b_scale = std::max(b_scale, std::abs(rows[r].factor * orig_rhs(rows[r])));
    if (-z1 > opt.feasibility_tol * b_scale) return LpStatus::kInfeasible;
    drive_out_artificials();
    return primal(false, limit());
  }

  LpSolution finish(LpStatus st) {
    if (m() == 0 && st == LpStatus::kOptimal) {
      const bool bounded = std::all_of(prob.objective.begin(), prob.objective.end(),
                                       [](double c) { return c == 0.0; });
      LpSolution sol;
      sol.status = bounded ? LpStatus::kOptimal : LpStatus::kUnbounded;
      sol.x.assign(n, 0.0);
      ready = false;
      return sol;
    }
    LpSolution sol = extract(st);
    ready = st == LpStatus::kOptimal;
    if (!ready) return sol;
    const double tol = opt.feasibility_tol;
    for (int attempt = 0; attempt < 2 && relative_violation(prob, sol.x) > tol; ++attempt) {
      if (!reinvert()) break;
      LpStatus again = dual(limit());
      if (again == LpStatus::kOptimal) again = primal(false, limit());
      const std::size_t spent = sol.iterations;
      sol = extract(again);
      sol.iterations = std::max(sol.iterations, spent);
      ready = again == LpStatus::kOptimal;
      if (!ready) return sol;
    }
    if (relative_violation(prob, sol.x) > tol) refactor(sol);
    if (sol.status == LpStatus::kOptimal && relative_violation(prob, sol.x) > 1e2 * tol) {
      sol.status = LpStatus::kNumericalFailure;
      ready = false;
    }
    return sol;
  }

  LpSolution solve() {
    prob.validate();
    if (!ready) return finish(cold());
    absorb_pending();
    iterations = 0;
    LpStatus st = dual(limit());
    if (st == LpStatus::kOptimal) st = primal(false, limit());
    if (st == LpStatus::kIterationLimit || st == LpStatus::kNumericalFailure) st = cold();
    LpSolution sol = finish(st);
    if (sol.status == LpStatus::kNumericalFailure) sol = finish(cold());
    return sol;
  }
};

LpSolver::LpSolver(LpProblem problem, LpOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->prob = std::move(problem);
  impl_->opt = options;
}
LpSolver::~LpSolver() = default;
LpSolver::LpSolver(const LpSolver& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}
LpSolver& LpSolver::operator=(const LpSolver& other) {
  if (this != &other) impl_ = std::make_unique<Impl>(*other.impl_);
  return *this;
}
LpSolver::LpSolver(LpSolver&&) noexcept = default;
LpSolver& LpSolver::operator=(LpSolver&&) noexcept = default;

LpSolution LpSolver::solve() { return impl_->solve(); }

void LpSolver::add_ineq(const std::vector<double>& row, double rhs) {
  impl_->prob.add_ineq(row, rhs);
  if (impl_->ready) {
    ++impl_->pending;
  }
}

void LpSolver::set_ineq_rhs(std::size_t i, double rhs) {
  if (i >= impl_->prob.ineq.rows()) throw ValidationError("lp: set_ineq_rhs row index out of range");
  impl_->set_ineq_rhs(i, rhs);
}

void LpSolver::set_objective(std::vector<double> objective) {
  if (objective.size() != impl_->prob.num_vars()) {
    throw ValidationError("lp: objective has wrong length");
  }
  impl_->set_objective(std::move(objective));
}

LpSolution LpSolver::polished() const {
  if (!impl_->ready) throw ValidationError("lp: polished() needs an optimal basis");
  LpSolution sol = impl_->extract(LpStatus::kOptimal);
  impl_->refactor(sol);
  return sol;
}

const LpProblem& LpSolver::problem() const { return impl_->prob; }

LpSolution solve_lp(const LpProblem& problem, const LpOptions& options) {
  LpSolver s(problem, options);
  return s.solve();
}

void write_lp(const LpProblem& problem, std::ostream& out) {
  const std::size_t n = problem.num_vars();
  auto name = [&](std::size_t j) {
    return problem.variable_names.empty() ? "x" + std::to_string(j + 1) : problem.variable_names[j];
  };
  auto terms = [&](const double* row) {
    bool first = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] == 0.0) continue;
      out << (row[j] < 0.0 ? " - " : (first ? " " : " + ")) << std::abs(row[j]) << ' ' << name(j);
      first = false;
    }
    if (first) out << " 0 " << name(0);
  };
  out.precision(17);
  out << "Minimize\n obj:";
  terms(problem.objective.data());
  out << "\nSubject To\n";
  for (std::size_t r = 0; r < problem.ineq.rows(); ++r) {
    out << " c" << r + 1 << ':';
    terms(problem.ineq.row(r));
    out << " <= " << problem.ineq_rhs[r] << '\n';
  }
  for (std::size_t r = 0; r < problem.eq.rows(); ++r) {
    out << " e" << r + 1 << ':';
    terms(problem.eq.row(r));
    out << " = " << problem.eq_rhs[r] << '\n';
  }
  out << "Bounds\n";
  for (std::size_t j = 0; j < n; ++j) out << ' ' << name(j) << " free\n";
  out << "End\n";
}

}  // namespace stt::lp

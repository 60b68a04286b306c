#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace stt::lp {

/// Row-major dense matrix, just enough for LP data.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void append_row(const std::vector<double>& values);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// minimize c.x subject to A x <= b, A_eq x = b_eq, x free.
struct LpProblem {
  std::vector<double> objective;
  Matrix ineq;
  std::vector<double> ineq_rhs;
  Matrix eq;
  std::vector<double> eq_rhs;
  std::vector<std::string> variable_names;  // optional, diagnostics only

  explicit LpProblem(std::size_t num_vars = 0);

  std::size_t num_vars() const { return objective.size(); }
  void add_ineq(const std::vector<double>& row, double rhs);
  void add_eq(const std::vector<double>& row, double rhs);

  /// Throws ValidationError on inconsistent sizes or non-finite entries.
  void validate() const;
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit, kNumericalFailure };

const char* to_string(LpStatus s);

struct LpSolution {
  LpStatus status = LpStatus::kNumericalFailure;
  std::vector<double> x;
  double objective_value = 0.0;
  /// Multipliers mu >= 0 of the inequality rows, with c + A^T mu + A_eq^T nu = 0.
  std::vector<double> ineq_duals;
  std::vector<double> eq_duals;
  std::size_t iterations = 0;
  double max_violation = 0.0;  // worst row residual of x
};

struct LpOptions {
  double feasibility_tol = 1e-8;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-7;
  /// Relaxation of basic values in the two-pass ratio test. Kept well below
  /// feasibility_tol: the clamp of negative basics after a pivot perturbs b
  /// by up to this much.
  double ratio_tol = 1e-11;
  /// Consecutive degenerate pivots before pricing switches to Bland's rule.
  std::size_t degenerate_switch = 50;
  std::size_t max_iterations = 0;  // 0 -> 50 (m + n) + 1000
};

/// Dense tableau simplex that keeps its basis between solves. The first
/// solve is two-phase primal; rows appended afterwards are priced into the
/// current tableau and repaired with dual simplex pivots. Copies carry the
/// basis, so one solved LP can seed several neighbouring ones.
class LpSolver {
 public:
  explicit LpSolver(LpProblem problem, LpOptions options = {});
  ~LpSolver();
  LpSolver(const LpSolver&);
  LpSolver& operator=(const LpSolver&);
  LpSolver(LpSolver&&) noexcept;
  LpSolver& operator=(LpSolver&&) noexcept;

  LpSolution solve();
  /// Appends a row a.x <= rhs; takes effect at the next solve().
  void add_ineq(const std::vector<double>& row, double rhs);
  /// Replaces the rhs of inequality row i; the next solve starts with dual
  /// simplex from the current basis.
  void set_ineq_rhs(std::size_t i, double rhs);
  /// Replaces the objective; the next solve continues with primal simplex.
  void set_objective(std::vector<double> objective);
  /// The last optimal solution recomputed from an LU factorization of its
  /// basis on the original rows, free of tableau round-off.
  LpSolution polished() const;
  const LpProblem& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Two-phase dense tableau simplex over the nonnegative split of the free
/// variables. Pricing is Dantzig's rule until a run of degenerate pivots,
/// then Bland's rule for the rest of the phase. The final basis is
/// re-factorized to recover x and the duals accurately.
LpSolution solve_lp(const LpProblem& problem, const LpOptions& options = {});

/// Plain-text LP format (CPLEX-style) for cross-checking with other solvers.
void write_lp(const LpProblem& problem, std::ostream& out);

}  // namespace stt::lp

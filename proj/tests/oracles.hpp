#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance binary. None of them call into the code they check.

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

#include "stt/lp.hpp"
#include "stt/scenario.hpp"

namespace stt::oracle {

// Worst residual of x against every row of the problem.
inline double lp_residual(const lp::LpProblem& p, const std::vector<double>& x) {
  double worst = 0.0;
  for (std::size_t r = 0; r < p.ineq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += p.ineq(r, j) * x[j];
    worst = std::max(worst, s - p.ineq_rhs[r]);
  }
  for (std::size_t r = 0; r < p.eq.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += p.eq(r, j) * x[j];
    worst = std::max(worst, std::abs(s - p.eq_rhs[r]));
  }
  return worst;
}

// Optimum of a bounded LP by enumerating every basis of n active rows
// (equalities always active). nullopt when no vertex is feasible.
inline std::optional<double> lp_vertex_enumeration(const lp::LpProblem& p) {
  const std::size_t n = p.num_vars();
  const std::size_t me = p.eq.rows();
  const std::size_t mi = p.ineq.rows();
  if (me > n || mi < n - me) return std::nullopt;
  const std::size_t pick = n - me;
  std::optional<double> best;
  std::vector<std::size_t> idx(pick);
  for (std::size_t k = 0; k < pick; ++k) idx[k] = k;
  const auto N = static_cast<Eigen::Index>(n);
  while (true) {
    Eigen::MatrixXd A(N, N);
    Eigen::VectorXd b(N);
    Eigen::Index r = 0;
    for (std::size_t e = 0; e < me; ++e, ++r) {
      for (std::size_t j = 0; j < n; ++j) A(r, static_cast<Eigen::Index>(j)) = p.eq(e, j);
      b(r) = p.eq_rhs[e];
    }
    for (std::size_t k = 0; k < pick; ++k, ++r) {
      for (std::size_t j = 0; j < n; ++j) A(r, static_cast<Eigen::Index>(j)) = p.ineq(idx[k], j);
      b(r) = p.ineq_rhs[idx[k]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.isInvertible()) {
      const Eigen::VectorXd xv = lu.solve(b);
      const std::vector<double> x(xv.data(), xv.data() + n);
      if (lp_residual(p, x) <= 1e-9) {
        double obj = 0.0;
        for (std::size_t j = 0; j < n; ++j) obj += p.objective[j] * x[j];
        if (!best || obj < *best) best = obj;
      }
    }
    std::size_t k = pick;
    while (k > 0 && idx[k - 1] == mi - pick + k - 1) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t q = k; q < pick; ++q) idx[q] = idx[q - 1] + 1;
  }
  return best;
}

// Small random LP: 2..5 free variables inside a random box, up to 7 more
// random rows, and an equality 30% of the time. Always bounded.
inline lp::LpProblem random_small_lp(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> nv(2, 5);
  std::uniform_int_distribution<std::size_t> nr(0, 7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution with_eq(0.3);
  const std::size_t n = nv(rng);
  lp::LpProblem p(n);
  for (double& c : p.objective) c = u(rng);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> row(n, 0.0);
    row[j] = 1.0;
    p.add_ineq(row, 2.0 + u(rng));
    row[j] = -1.0;
    p.add_ineq(row, 2.0 + u(rng));
  }
  const std::size_t m = nr(rng);
  for (std::size_t r = 0; r < m; ++r) {
    std::vector<double> row(n);
    for (double& a : row) a = u(rng);
    p.add_ineq(row, 0.5 * u(rng));
  }
  if (with_eq(rng)) {
    std::vector<double> row(n);
    for (double& a : row) a = u(rng);
    p.add_eq(row, 0.3 * u(rng));
  }
  return p;
}

// Whether two closed boxes with bounds on the half-integer grid in [0, 5]
// meet, by scanning every grid point: a nonempty intersection of such boxes
// contains its own lower corner, which is a grid point.
inline bool grid_boxes_meet(const Box& a, const Box& b) {
  const std::size_t n = a.dims();
  std::vector<int> idx(n, 0);
  while (true) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = 0.5 * idx[i];
    if (a.contains(p) && b.contains(p)) return true;
    std::size_t i = 0;
    while (i < n && ++idx[i] == 11) idx[i++] = 0;
    if (i == n) return false;
  }
}

inline Box random_grid_box(std::mt19937_64& rng, std::size_t dims) {
  std::uniform_int_distribution<int> k(0, 10);
  Box b;
  for (std::size_t i = 0; i < dims; ++i) {
    int lo = k(rng);
    int hi = k(rng);
    if (lo > hi) std::swap(lo, hi);
    b.axes.push_back({0.5 * lo, 0.5 * hi});
  }
  return b;
}

}  // namespace stt::oracle

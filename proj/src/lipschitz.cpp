#include "stt/lipschitz.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stt/errors.hpp"

namespace stt {

SlopeSampleConfig SlopeSampleConfig::defaults_for(double horizon) {
  SlopeSampleConfig cfg;
  cfg.alpha = horizon / 1000.0;
  return cfg;
}

void SlopeSampleConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("lipschitz: alpha must be positive");
  if (pair_count < 2) throw ValidationError("lipschitz: pair count must be at least 2");
  if (repetitions < 10) throw ValidationError("lipschitz: repetitions must be at least 10");
}

const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::kConverged: return "converged";
    case FitStatus::kDegenerate: return "degenerate";
    case FitStatus::kConservative: return "conservative";
  }
  return "?";
}

double max_slope_sample(const TubeFace& face, double horizon, double alpha, std::size_t pair_count,
                        std::mt19937_64& rng) {
  if (!(horizon > 0.0)) throw DomainError("lipschitz: horizon must be positive");
  const double a = std::min(alpha, horizon);
  std::uniform_real_distribution<double> pick(0.0, horizon);
  std::uniform_real_distribution<double> offset(-a, a);
  double best = 0.0;
  for (std::size_t n = 0; n < pair_count; ++n) {
    double tk = 0.0;
    double tm = 0.0;
    do {
      tk = pick(rng);
      tm = tk + offset(rng);
    } while (tm < 0.0 || tm > horizon || tm == tk);
    best = std::max(best, std::abs(eval_face(face, tk) - eval_face(face, tm)) / std::abs(tk - tm));
  }
  return best;
}

double max_slope_sample(const TubeFace& face, double horizon, const SlopeSampleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  return max_slope_sample(face, horizon, cfg.alpha, cfg.pair_count, rng);
}

namespace {

// Profile of the reverse Weibull likelihood at a fixed location. With
// y = location - x > 0 the sample is Weibull(scale, shape) in y.
struct Profile {
  double loglik = -std::numeric_limits<double>::infinity();
  double shape = 0.0;
  double scale = 0.0;
};

Profile profile_at(const std::vector<double>& x, double location) {
  const std::size_t n = x.size();
  std::vector<double> logz(n);
  double ymax = 0.0;
  for (double v : x) ymax = std::max(ymax, location - v);
  double sum_logy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = location - x[i];
    logz[i] = std::log(y / ymax);  // <= 0
    sum_logy += std::log(y);
  }
  const double mean_logz = std::accumulate(logz.begin(), logz.end(), 0.0) / static_cast<double>(n);

  // score(k) = sum z^k log z / sum z^k - 1/k - mean log z, increasing in k.
  auto moments = [&](double k, double& s0, double& s1, double& s2) {
    s0 = s1 = s2 = 0.0;
    for (double lz : logz) {
      const double w = std::exp(k * lz);
      s0 += w;
      s1 += w * lz;
      s2 += w * lz * lz;
    }
  };
  auto score = [&](double k) {
    double s0, s1, s2;
    moments(k, s0, s1, s2);
    return s1 / s0 - 1.0 / k - mean_logz;
  };

  double lo = 1e-3;
  double hi = 1e3;
  if (score(hi) < 0.0) return {};  // tail too thin to fit
  if (score(lo) > 0.0) hi = lo;
  double k = std::clamp(1.0, lo, hi);
  for (int it = 0; it < 200 && lo < hi; ++it) {
    double s0, s1, s2;
    moments(k, s0, s1, s2);
    const double g = s1 / s0 - 1.0 / k - mean_logz;
    if (g > 0.0) hi = k; else lo = k;
    const double dg = s2 / s0 - (s1 / s0) * (s1 / s0) + 1.0 / (k * k);
    double next = k - g / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - k) <= 1e-13 * k) {
      k = next;
      break;
    }
    k = next;
  }

  double s0, s1, s2;
  moments(k, s0, s1, s2);
  const double dn = static_cast<double>(n);
  const double mean_zk = s0 / dn;
  Profile p;
  p.shape = k;
  p.scale = ymax * std::pow(mean_zk, 1.0 / k);
  p.loglik = dn * std::log(k) - dn * k * std::log(ymax) - dn * std::log(mean_zk) + (k - 1.0) * sum_logy - dn;
  return p;
}

}  // namespace

WeibullFit fit_reverse_weibull(const std::vector<double>& maxima) {
  if (maxima.size() < 10) throw ValidationError("lipschitz: reverse Weibull fit needs at least 10 maxima");
  for (double v : maxima)
    if (!std::isfinite(v)) throw ValidationError("lipschitz: non-finite block maximum");
  const auto [mn_it, mx_it] = std::minmax_element(maxima.begin(), maxima.end());
  const double mx = *mx_it;
  const double range = mx - *mn_it;

  WeibullFit fit;
  if (range <= 0.0) {
    fit.location = mx;
    fit.status = FitStatus::kDegenerate;
    return fit;
  }

  // location = mx + exp(s)
  auto eval = [&](double s) { return profile_at(maxima, mx + std::exp(s)); };
  constexpr int kGrid = 240;
  const double s_lo = std::log(range * 1e-6);
  const double s_hi = std::log(range * 1e3);
  const double h = (s_hi - s_lo) / kGrid;
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double ll = eval(s_lo + h * i).loglik;
    if (ll > best_ll) {
      best_ll = ll;
      best = i;
    }
  }

  auto conservative = [&](double s) {
    const Profile p = eval(s);
    fit.location = mx;
    fit.scale = p.scale;
    fit.shape = p.shape;
    fit.log_likelihood = p.loglik;
    fit.status = FitStatus::kConservative;
    return fit;
  };
  if (!std::isfinite(best_ll) || best == 0 || best == kGrid) return conservative(s_lo + h * best);

  // Safeguarded Newton on d loglik / ds inside the grid bracket.
  double a = s_lo + h * (best - 1);
  double b = s_lo + h * (best + 1);
  double s = s_lo + h * best;
  const double d = 1e-4 * h;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const double fm = eval(s - d).loglik;
    const double f0 = eval(s).loglik;
    const double fp = eval(s + d).loglik;
    const double g = (fp - fm) / (2.0 * d);
    const double c = (fp - 2.0 * f0 + fm) / (d * d);
    if (g > 0.0) a = s; else b = s;
    double next = c < 0.0 ? s - g / c : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - s) < 1e-10 || b - a < 1e-10) {
      s = next;
      converged = true;
      break;
    }
    s = next;
  }
  if (!converged) return conservative(s);

  const Profile p = eval(s);
  fit.location = mx + std::exp(s);
  fit.scale = p.scale;
  fit.shape = p.shape;
  fit.log_likelihood = p.loglik;
  fit.status = FitStatus::kConverged;
  return fit;
}

std::vector<double> sample_face_maxima(const TubeFace& face, double horizon, const SlopeSampleConfig& cfg,
                                       std::size_t agent, std::size_t dim, Exec exec) {
  cfg.validate();
  const auto side = static_cast<std::uint32_t>(face.side);
  const auto seed_lo = static_cast<std::uint32_t>(cfg.rng_seed);
  const auto seed_hi = static_cast<std::uint32_t>(cfg.rng_seed >> 32);
  auto one = [&](std::size_t r) {
    std::seed_seq seq{seed_lo, seed_hi, static_cast<std::uint32_t>(agent), static_cast<std::uint32_t>(dim), side,
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    return max_slope_sample(face, horizon, cfg.alpha, cfg.pair_count, rng);
  };
  const auto reps = static_cast<std::ptrdiff_t>(cfg.repetitions);
  std::vector<double> out(cfg.repetitions);
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t r = 0; r < reps; ++r) out[r] = one(r);
  } else {
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (std::ptrdiff_t r = 0; r < reps; ++r) out[r] = one(r);
  }
  return out;
}

LipschitzEstimate estimate_L(const TubeSet& tubes, const SlopeSampleConfig& cfg, Exec exec) {
  cfg.validate();
  LipschitzEstimate est;
  for (std::size_t j = 0; j < tubes.agents.size(); ++j) {
    for (std::size_t i = 0; i < tubes.agents[j].dims.size(); ++i) {
      for (const TubeFace* f : {&tubes.agents[j].dims[i].lower, &tubes.agents[j].dims[i].upper}) {
        FaceEstimate fe;
        fe.agent = j;
        fe.dim = i;
        fe.side = f->side;
        est.faces.push_back(std::move(fe));
      }
    }
  }
  auto face_of = [&](const FaceEstimate& fe) -> const TubeFace& {
    const FacePair& pair = tubes.agents[fe.agent].dims[fe.dim];
    return fe.side == FaceSide::kLower ? pair.lower : pair.upper;
  };
  auto run = [&](FaceEstimate& fe) {
    const TubeFace& face = face_of(fe);
    fe.maxima = sample_face_maxima(face, tubes.horizon, cfg, fe.agent, fe.dim, Exec::kSerial);
    fe.fit = fit_reverse_weibull(fe.maxima);
    fe.analytic = analytic_slope_bound(face, tubes.horizon);
  };
  const auto n = static_cast<std::ptrdiff_t>(est.faces.size());
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t f = 0; f < n; ++f) run(est.faces[f]);
  } else {
    // Fits can throw; collect and rethrow after the region.
    std::vector<std::string> errors(est.faces.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_count())
    for (std::ptrdiff_t f = 0; f < n; ++f) {
      try {
        run(est.faces[f]);
      } catch (const std::exception& e) {
        errors[f] = e.what();
      }
    }
    for (const auto& e : errors)
      if (!e.empty()) throw ValidationError(e);
  }
  for (const FaceEstimate& fe : est.faces) {
    if (fe.side == FaceSide::kLower) {
      est.L_L = std::max(est.L_L, fe.fit.location);
      est.analytic_L_L = std::max(est.analytic_L_L, fe.analytic);
    } else {
      est.L_U = std::max(est.L_U, fe.fit.location);
      est.analytic_L_U = std::max(est.analytic_L_U, fe.analytic);
    }
  }
  return est;
}

}  // namespace stt

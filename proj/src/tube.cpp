#include "stt/tube.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace stt {

using detail::json;

double eval_poly(std::span<const double> coeffs, double t) {
  double v = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 0;) v = v * t + coeffs[k];
  return v;
}

double eval_poly_derivative(std::span<const double> coeffs, double t) {
  double v = 0.0;
  for (std::size_t k = coeffs.size(); k-- > 1;) v = v * t + static_cast<double>(k) * coeffs[k];
  return v;
}

namespace {

std::vector<double> derivative(std::span<const double> c) {
  std::vector<double> d;
  for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
  return d;
}

// Drop exactly-zero leading coefficients.
std::vector<double> trimmed(std::span<const double> c) {
  std::vector<double> out(c.begin(), c.end());
  while (!out.empty() && out.back() == 0.0) out.pop_back();
  return out;
}

}  // namespace

std::vector<double> real_roots_in(std::span<const double> coeffs, double a, double b) {
  const std::vector<double> c = trimmed(coeffs);
  std::vector<double> roots;
  const std::size_t deg = c.empty() ? 0 : c.size() - 1;
  if (deg == 0) return roots;
  if (deg == 1) {
    roots.push_back(-c[0] / c[1]);
  } else if (deg == 2) {
    const double disc = c[1] * c[1] - 4.0 * c[2] * c[0];
    if (disc >= 0.0) {
      // Numerically stable pair.
      const double q = -0.5 * (c[1] + std::copysign(std::sqrt(disc), c[1]));
      roots.push_back(q / c[2]);
      if (q != 0.0) roots.push_back(c[0] / q);
    }
  } else {
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
    for (std::size_t i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
    for (std::size_t i = 0; i < deg; ++i) companion(i, deg - 1) = -c[i] / c[deg];
    Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
    const auto ev = es.eigenvalues();
    const double scale = std::max(1.0, std::abs(b - a));
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (std::abs(ev[i].imag()) > 1e-7 * scale) continue;
      double r = ev[i].real();
      // Newton polish.
      for (int it = 0; it < 4; ++it) {
        const double d = eval_poly_derivative(c, r);
        if (d == 0.0) break;
        r -= eval_poly(c, r) / d;
      }
      roots.push_back(r);
    }
  }
  std::vector<double> in;
  for (double r : roots) {
    if (std::isfinite(r) && r >= a && r <= b) in.push_back(r);
  }
  std::sort(in.begin(), in.end());
  return in;
}

double analytic_slope_bound(const TubeFace& face, double horizon) {
  const std::vector<double> d1 = derivative(face.coeffs);
  if (d1.empty()) return 0.0;
  if (face.degree() <= 3) {
    // |gamma'| peaks at an endpoint or where gamma'' vanishes.
    double best = std::max(std::abs(eval_poly(d1, 0.0)), std::abs(eval_poly(d1, horizon)));
    for (double r : real_roots_in(derivative(d1), 0.0, horizon)) {
      best = std::max(best, std::abs(eval_poly(d1, r)));
    }
    return best;
  }
  constexpr int kGrid = 10000;
  const double h = horizon / (kGrid - 1);
  double best = 0.0;
  for (int k = 0; k < kGrid; ++k) best = std::max(best, std::abs(eval_poly(d1, k * h)));
  // Any t is within h/2 of a grid point, so |gamma'(t)| <= grid max + (h/2) max|gamma''|.
  const std::vector<double> d2 = derivative(d1);
  double d2_bound = 0.0;
  for (std::size_t k = 0; k < d2.size(); ++k) d2_bound += std::abs(d2[k]) * std::pow(horizon, k);
  return best + 0.5 * h * d2_bound;
}

FaceRange face_range(const TubeFace& face, double horizon) {
  FaceRange r;
  auto consider = [&](double t) {
    const double v = eval_face(face, t);
    if (v < r.min) r.min = v, r.argmin = t;
    if (v > r.max) r.max = v, r.argmax = t;
  };
  r.min = r.max = eval_face(face, 0.0);
  consider(horizon);
  for (double t : real_roots_in(derivative(face.coeffs), 0.0, horizon)) consider(t);
  return r;
}

Box tube_box_at(const TubeSet& tubes, std::size_t agent, double t) {
  const AgentTubes& a = tubes.agents.at(agent);
  Box b;
  b.axes.reserve(a.dims.size());
  for (std::size_t i = 0; i < a.dims.size(); ++i) {
    const double lo = eval_face(a.dims[i].lower, t);
    const double hi = eval_face(a.dims[i].upper, t);
    const double w = i < a.min_width.size() ? a.min_width[i] : 0.0;
    if (!(lo < hi) || lo + w > hi + 1e-9) {
      std::ostringstream msg;
      msg << "tube integrity: agent " << agent + 1 << " dim " << i + 1 << " at t=" << t
          << " has lower=" << lo << " upper=" << hi << " (min width " << w << ")";
      throw IntegrityError(msg.str());
    }
    b.axes.push_back({lo, hi});
  }
  return b;
}

void check_tube_integrity(const TubeSet& tubes, double resolution) {
  const auto steps = static_cast<std::size_t>(std::ceil(tubes.horizon / resolution));
  for (std::size_t j = 0; j < tubes.agent_count(); ++j) {
    for (std::size_t k = 0; k <= steps; ++k) {
      (void)tube_box_at(tubes, j, std::min(tubes.horizon, k * resolution));
    }
  }
}

TubeSet parse_tubes(const std::string& text) {
  using detail::get_as;
  using detail::require;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("tubes: ") + e.what());
  }
  const std::string basis = root.value("basis", std::string("monomial"));
  if (basis != "monomial") throw ParseError("tubes: unsupported basis '" + basis + "'");

  TubeSet tubes;
  tubes.horizon = get_as<double>(require(root, "horizon"), "horizon");
  for (const auto& ja : require(root, "agents")) {
    AgentTubes a;
    for (const auto& jf : require(ja, "faces")) {
      FacePair p;
      p.lower = {get_as<std::vector<double>>(require(jf, "lower"), "lower"), FaceSide::kLower};
      p.upper = {get_as<std::vector<double>>(require(jf, "upper"), "upper"), FaceSide::kUpper};
      if (p.lower.coeffs.empty() || p.upper.coeffs.empty()) {
        throw ParseError("tubes: face with no coefficients");
      }
      a.dims.push_back(std::move(p));
    }
    if (ja.contains("min_width")) {
      a.min_width = get_as<std::vector<double>>(ja["min_width"], "min_width");
    } else {
      a.min_width.assign(a.dims.size(), 0.0);
    }
    if (a.min_width.size() != a.dims.size()) throw ParseError("tubes: min_width size mismatch");
    tubes.agents.push_back(std::move(a));
  }
  for (const auto& a : tubes.agents) {
    if (a.dims.size() != tubes.dims()) throw ParseError("tubes: agents disagree on dims");
  }
  return tubes;
}

std::string dump_tubes(const TubeSet& tubes) {
  json root;
  root["basis"] = "monomial";
  root["horizon"] = tubes.horizon;
  root["agents"] = json::array();
  for (const auto& a : tubes.agents) {
    json faces = json::array();
    for (const auto& p : a.dims) faces.push_back({{"lower", p.lower.coeffs}, {"upper", p.upper.coeffs}});
    root["agents"].push_back({{"faces", faces}, {"min_width", a.min_width}});
  }
  return root.dump(2) + "\n";
}

TubeSet load_tubes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open tubes file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tubes(ss.str());
}

void save_tubes(const TubeSet& tubes, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_tubes(tubes);
}

}  // namespace stt

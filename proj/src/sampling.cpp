#include "stt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

namespace stt {

std::vector<double> sample_time_grid(double horizon, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("sample_time_grid: epsilon must be positive");
  if (horizon <= 2.0 * epsilon) {
    std::clog << "warning: epsilon " << epsilon << " covers the whole horizon " << horizon
              << " with one sample\n";
    return {0.5 * horizon};
  }
  // The ratio is nominally an integer for the usual inputs; shave rounding noise
  // so 10 / 0.004 does not become 2501 intervals.
  const double ratio = horizon / (2.0 * epsilon);
  const auto intervals = static_cast<std::size_t>(std::ceil(ratio * (1.0 - 1e-12)));
  std::vector<double> grid(intervals + 1);
  for (std::size_t r = 0; r <= intervals; ++r) {
    grid[r] = horizon * static_cast<double>(r) / static_cast<double>(intervals);
  }
  grid.back() = horizon;
  return grid;
}

namespace {

// Largest rate of change of any box bound across keyframes.
double region_speed(const UnsafeRegion& r) {
  double v = 0.0;
  for (std::size_t k = 1; k < r.keyframes.size(); ++k) {
    const double dt = r.keyframes[k].time - r.keyframes[k - 1].time;
    const Box& a = r.keyframes[k - 1].box;
    const Box& b = r.keyframes[k].box;
    for (std::size_t i = 0; i < a.dims(); ++i) {
      v = std::max(v, std::abs(b[i].lo - a[i].lo) / dt);
      v = std::max(v, std::abs(b[i].hi - a[i].hi) / dt);
    }
  }
  return r.interpolation == Interpolation::kStatic ? 0.0 : v;
}

// Nodes lo, ..., hi with spacing at most h.
std::vector<double> axis_nodes(double lo, double hi, double h) {
  const double w = hi - lo;
  if (w <= 0.0) return {lo};
  const auto cells = static_cast<std::size_t>(std::ceil(w / h));
  std::vector<double> nodes(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) nodes[k] = lo + w * static_cast<double>(k) / static_cast<double>(cells);
  nodes.back() = hi;
  return nodes;
}

// Spacing for a joint (t, y) lattice: a probe is at most h/2 from the nearest
// lattice time, drifts at most speed*h/2 with the region, and is at most h/2
// per axis from a node, so h/2 * sqrt(1 + n (1 + v)^2) <= eps.
double lattice_spacing(double epsilon, std::size_t dims, double speed) {
  return 2.0 * epsilon / std::sqrt(1.0 + static_cast<double>(dims) * (1.0 + speed) * (1.0 + speed));
}

void add_lattice(const ScenarioSpec& spec, std::size_t region, SampleSet& out) {
  const UnsafeRegion& r = spec.obstacles[region];
  const double h = lattice_spacing(spec.epsilon, spec.dims, region_speed(r));
  for (double t : axis_nodes(0.0, spec.horizon, h)) {
    const Box box = unsafe_box_at(r, t, spec.horizon);
    std::vector<std::vector<double>> axes;
    for (std::size_t i = 0; i < spec.dims; ++i) axes.push_back(axis_nodes(box[i].lo, box[i].hi, h));
    std::vector<std::size_t> idx(spec.dims, 0);
    while (true) {
      UnsafeSample s{t, std::vector<double>(spec.dims), region, SampleKind::kLattice};
      for (std::size_t i = 0; i < spec.dims; ++i) s.y[i] = axes[i][idx[i]];
      out.unsafe_samples.push_back(std::move(s));
      std::size_t i = 0;
      while (i < spec.dims && ++idx[i] == axes[i].size()) idx[i++] = 0;
      if (i == spec.dims) break;
    }
  }
}

}  // namespace

SampleSet sample_unsafe(const ScenarioSpec& spec) {
  SampleSet out;
  out.epsilon = spec.epsilon;
  out.time_samples = sample_time_grid(spec.horizon, spec.epsilon);
  for (std::size_t o = 0; o < spec.obstacles.size(); ++o) {
    const UnsafeRegion& r = spec.obstacles[o];
    if (r.sampling == RegionSampling::kLattice) {
      add_lattice(spec, o, out);
      continue;
    }
    // A moving face drifts with the region, so its time grid is refined until
    // (t, face(t)) stays within eps of a sample.
    const double speed = region_speed(r);
    const std::vector<double> times =
        speed > 0.0
            ? axis_nodes(0.0, spec.horizon,
                         2.0 * spec.epsilon / std::sqrt(1.0 + static_cast<double>(spec.dims) * speed * speed))
            : out.time_samples;
    for (double t : times) {
      const Box box = unsafe_box_at(r, t, spec.horizon);
      UnsafeSample lo{t, std::vector<double>(spec.dims), o, SampleKind::kFaceMin};
      UnsafeSample hi{t, std::vector<double>(spec.dims), o, SampleKind::kFaceMax};
      for (std::size_t i = 0; i < spec.dims; ++i) {
        lo.y[i] = box[i].lo;
        hi.y[i] = box[i].hi;
      }
      out.unsafe_samples.push_back(std::move(lo));
      out.unsafe_samples.push_back(std::move(hi));
    }
  }
  return out;
}

CoverReport verify_cover(const SampleSet& samples, const ScenarioSpec& spec, double grid_resolution) {
  CoverReport rep;
  const double eps = samples.epsilon;
  const double slack = 1e-12 * std::max(1.0, spec.horizon);
  const auto& ts = samples.time_samples;
  if (ts.empty()) return rep;

  auto nearest_time_gap = [&](double t) {
    auto it = std::lower_bound(ts.begin(), ts.end(), t);
    double g = std::numeric_limits<double>::infinity();
    if (it != ts.end()) g = std::min(g, *it - t);
    if (it != ts.begin()) g = std::min(g, t - *(it - 1));
    return g;
  };

  const auto steps = static_cast<std::size_t>(std::ceil(spec.horizon / grid_resolution));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = std::min(spec.horizon, static_cast<double>(k) * grid_resolution);
    rep.worst_gap = std::max(rep.worst_gap, nearest_time_gap(t));
  }

  // Lattice regions: probe the augmented set directly.
  for (std::size_t o = 0; o < spec.obstacles.size(); ++o) {
    if (spec.obstacles[o].sampling != RegionSampling::kLattice) continue;
    std::vector<const UnsafeSample*> pts;
    for (const auto& s : samples.unsafe_samples) {
      if (s.region == o && s.kind == SampleKind::kLattice) pts.push_back(&s);
    }
    if (pts.empty()) {
      rep.worst_gap = std::numeric_limits<double>::infinity();
      continue;
    }
    for (std::size_t k = 0; k <= steps; ++k) {
      const double t = std::min(spec.horizon, static_cast<double>(k) * grid_resolution);
      const Box box = unsafe_box_at(spec.obstacles[o], t, spec.horizon);
      std::vector<std::vector<double>> axes;
      for (std::size_t i = 0; i < spec.dims; ++i) axes.push_back(axis_nodes(box[i].lo, box[i].hi, grid_resolution));
      auto lo = std::lower_bound(pts.begin(), pts.end(), t - eps - slack,
                                 [](const UnsafeSample* s, double v) { return s->t < v; });
      std::vector<std::size_t> idx(spec.dims, 0);
      while (true) {
        double best = std::numeric_limits<double>::infinity();
        for (auto it = lo; it != pts.end() && (*it)->t <= t + eps + slack; ++it) {
          double d2 = ((*it)->t - t) * ((*it)->t - t);
          for (std::size_t i = 0; i < spec.dims; ++i) {
            const double d = (*it)->y[i] - axes[i][idx[i]];
            d2 += d * d;
          }
          best = std::min(best, d2);
        }
        rep.worst_gap = std::max(rep.worst_gap, std::sqrt(best));
        std::size_t i = 0;
        while (i < spec.dims && ++idx[i] == axes[i].size()) idx[i++] = 0;
        if (i == spec.dims) break;
      }
    }
  }
  rep.covered = rep.worst_gap <= eps + slack;
  return rep;
}

void write_samples_csv(const SampleSet& samples, std::ostream& out) {
  const std::size_t n = samples.unsafe_samples.empty() ? 0 : samples.unsafe_samples.front().y.size();
  out << "t";
  for (std::size_t i = 0; i < n; ++i) out << ",y" << i + 1;
  out << ",region,kind\n";
  out.precision(17);
  for (const auto& s : samples.unsafe_samples) {
    out << s.t;
    for (double v : s.y) out << ',' << v;
    const char* kind = s.kind == SampleKind::kFaceMin ? "face_min"
                       : s.kind == SampleKind::kFaceMax ? "face_max"
                                                        : "lattice";
    out << ',' << s.region << ',' << kind << '\n';
  }
}

}  // namespace stt

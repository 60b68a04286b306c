#include "stt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace stt {

using detail::json;

bool Box::contains(const std::vector<double>& point) const {
  if (point.size() < axes.size()) return false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!axes[i].contains(point[i])) return false;
  }
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.dims() != dims()) return false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!axes[i].contains(other.axes[i])) return false;
  }
  return true;
}

bool Box::intersects(const Box& other) const {
  if (other.dims() != dims()) return false;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (!axes[i].intersects(other.axes[i])) return false;
  }
  return true;
}

std::vector<double> Box::center() const {
  std::vector<double> c(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) c[i] = axes[i].center();
  return c;
}

Box unsafe_box_at(const UnsafeRegion& region, double t, double horizon) {
  if (!(t >= 0.0) || !(t <= horizon)) {
    throw DomainError("unsafe_box_at: t=" + std::to_string(t) + " outside [0, " +
                      std::to_string(horizon) + "]");
  }
  const auto& kf = region.keyframes;
  if (region.interpolation == Interpolation::kStatic || kf.size() == 1 || t <= kf.front().time) {
    return kf.front().box;
  }
  if (t >= kf.back().time) return kf.back().box;

  auto hi = std::upper_bound(kf.begin(), kf.end(), t,
                             [](double v, const Keyframe& k) { return v < k.time; });
  const Keyframe& b = *hi;
  const Keyframe& a = *(hi - 1);
  if (t == a.time) return a.box;
  const double s = (t - a.time) / (b.time - a.time);
  Box out = a.box;
  for (std::size_t i = 0; i < out.dims(); ++i) {
    out[i].lo = a.box[i].lo + s * (b.box[i].lo - a.box[i].lo);
    out[i].hi = a.box[i].hi + s * (b.box[i].hi - a.box[i].hi);
  }
  return out;
}

double default_min_width(const AgentTask& task, std::size_t dim) {
  return 0.5 * std::min(task.start[dim].width(), task.goal[dim].width());
}

namespace {

void check_box(const Box& b, std::size_t dims, const std::string& what) {
  if (b.dims() != dims) {
    throw ValidationError(what + ": expected " + std::to_string(dims) + " axes, got " +
                          std::to_string(b.dims()));
  }
  for (std::size_t i = 0; i < dims; ++i) {
    if (!std::isfinite(b[i].lo) || !std::isfinite(b[i].hi)) {
      throw ValidationError(what + ": non-finite bound in dim " + std::to_string(i + 1));
    }
    if (b[i].lo > b[i].hi) {
      throw ValidationError(what + ": lo > hi in dim " + std::to_string(i + 1));
    }
  }
}

bool hits_any(const ScenarioSpec& spec, const Box& b, double t) {
  for (const auto& r : spec.obstacles) {
    if (unsafe_box_at(r, t, spec.horizon).intersects(b)) return true;
  }
  return false;
}

}  // namespace

void validate_scenario(const ScenarioSpec& spec) {
  if (spec.dims == 0) throw ValidationError("dims must be positive");
  if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
    throw ValidationError("horizon t_c must be positive");
  }
  if (!(spec.epsilon > 0.0) || !std::isfinite(spec.epsilon)) {
    throw ValidationError("epsilon must be positive");
  }
  if (spec.agents.empty()) throw ValidationError("at least one agent is required");
  check_box(spec.arena, spec.dims, "arena");

  for (std::size_t o = 0; o < spec.obstacles.size(); ++o) {
    const auto& r = spec.obstacles[o];
    const std::string what = "obstacle " + std::to_string(o + 1);
    if (r.keyframes.empty()) throw ValidationError(what + ": no keyframes");
    if (r.interpolation == Interpolation::kStatic && r.keyframes.size() != 1) {
      throw ValidationError(what + ": static region must have exactly one keyframe");
    }
    for (std::size_t k = 0; k < r.keyframes.size(); ++k) {
      check_box(r.keyframes[k].box, spec.dims, what + " keyframe " + std::to_string(k + 1));
      if (k > 0 && !(r.keyframes[k].time > r.keyframes[k - 1].time)) {
        throw ValidationError(what + ": keyframe times must be strictly increasing");
      }
      // Linear interpolation of boxes stays inside a box arena, so checking
      // the keyframes covers every t.
      if (!spec.arena.contains(r.keyframes[k].box)) {
        throw ValidationError(what + ": keyframe box leaves the arena");
      }
    }
  }

  for (std::size_t j = 0; j < spec.agents.size(); ++j) {
    const auto& a = spec.agents[j];
    const std::string what = "agent " + std::to_string(j + 1);
    check_box(a.start, spec.dims, what + " start");
    check_box(a.goal, spec.dims, what + " goal");
    if (!spec.arena.contains(a.start)) throw ValidationError(what + ": start box leaves the arena");
    if (!spec.arena.contains(a.goal)) throw ValidationError(what + ": goal box leaves the arena");
    if (hits_any(spec, a.start, 0.0)) {
      throw ValidationError(what + ": start box intersects U(0)");
    }
    if (hits_any(spec, a.goal, spec.horizon)) {
      throw ValidationError(what + ": goal box intersects U(t_c)");
    }
    if (a.tube_degree_per_dim.size() != spec.dims) {
      throw ValidationError(what + ": tube_degree_per_dim needs one entry per dim");
    }
    if (a.min_width_per_dim.size() != spec.dims) {
      throw ValidationError(what + ": min_width_per_dim needs one entry per dim");
    }
    for (std::size_t i = 0; i < spec.dims; ++i) {
      if (a.tube_degree_per_dim[i] < 1) {
        throw ValidationError(what + ": tube degree must be positive");
      }
      const double w = a.min_width_per_dim[i];
      if (!(w > 0.0)) throw ValidationError(what + ": min width must be positive");
      if (w > a.start[i].width() || w > a.goal[i].width()) {
        throw ValidationError(what + ": min width exceeds start/goal width in dim " +
                              std::to_string(i + 1));
      }
    }
  }
}

namespace {

Interpolation interpolation_from(const std::string& s) {
  if (s == "static") return Interpolation::kStatic;
  if (s == "piecewise-linear") return Interpolation::kPiecewiseLinear;
  throw ParseError("unknown interpolation '" + s + "'");
}

const char* to_string(Interpolation i) {
  return i == Interpolation::kStatic ? "static" : "piecewise-linear";
}

RegionSampling sampling_from(const std::string& s) {
  if (s == "faces") return RegionSampling::kFaces;
  if (s == "lattice") return RegionSampling::kLattice;
  throw ParseError("unknown region sampling '" + s + "'");
}

const char* to_string(RegionSampling s) {
  return s == RegionSampling::kFaces ? "faces" : "lattice";
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& text) {
  using detail::box_from_json;
  using detail::get_as;
  using detail::require;

  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }

  ScenarioSpec spec;
  spec.dims = get_as<std::size_t>(require(root, "dims"), "dims");
  spec.horizon = get_as<double>(require(root, "horizon"), "horizon");
  spec.epsilon = get_as<double>(require(root, "epsilon"), "epsilon");
  spec.arena = box_from_json(require(root, "arena"), "arena");

  for (const auto& ja : require(root, "agents")) {
    AgentTask a;
    a.name = ja.value("name", std::string{});
    a.start = box_from_json(require(ja, "start"), "start");
    a.goal = box_from_json(require(ja, "goal"), "goal");
    if (ja.contains("tube_degree_per_dim")) {
      a.tube_degree_per_dim = get_as<std::vector<int>>(ja["tube_degree_per_dim"], "tube_degree_per_dim");
    } else {
      a.tube_degree_per_dim.assign(spec.dims, 2);
    }
    if (ja.contains("min_width_per_dim")) {
      a.min_width_per_dim = get_as<std::vector<double>>(ja["min_width_per_dim"], "min_width_per_dim");
    } else if (a.start.dims() == spec.dims && a.goal.dims() == spec.dims) {
      for (std::size_t i = 0; i < spec.dims; ++i) a.min_width_per_dim.push_back(default_min_width(a, i));
    }
    spec.agents.push_back(std::move(a));
  }

  if (root.contains("obstacles")) {
    for (const auto& jo : root["obstacles"]) {
      UnsafeRegion r;
      r.interpolation = interpolation_from(jo.value("interpolation", std::string("static")));
      r.sampling = sampling_from(jo.value("sampling", std::string("faces")));
      for (const auto& jk : require(jo, "keyframes")) {
        r.keyframes.push_back({get_as<double>(require(jk, "t"), "t"), box_from_json(require(jk, "box"), "box")});
      }
      spec.obstacles.push_back(std::move(r));
    }
  }

  if (root.contains("plant")) {
    const auto& jp = root["plant"];
    spec.plant.kind = jp.value("kind", spec.plant.kind);
    spec.plant.g_sign = jp.value("g_sign", spec.plant.g_sign);
  }
  if (root.contains("disturbance")) {
    const auto& jd = root["disturbance"];
    spec.disturbance.kind = jd.value("kind", spec.disturbance.kind);
    spec.disturbance.bound = jd.value("bound", spec.disturbance.bound);
    spec.disturbance.seed = jd.value("seed", spec.disturbance.seed);
  }
  if (root.contains("controller")) {
    const auto& jc = root["controller"];
    if (jc.contains("kappa")) spec.controller.kappa = get_as<std::vector<double>>(jc["kappa"], "kappa");
    spec.controller.e_max = jc.value("e_max", spec.controller.e_max);
    if (jc.contains("funnels")) {
      for (const auto& jf : jc["funnels"]) {
        FunnelSettings f;
        f.p = get_as<std::vector<double>>(require(jf, "p"), "p");
        f.q = get_as<std::vector<double>>(require(jf, "q"), "q");
        f.mu = get_as<std::vector<double>>(require(jf, "mu"), "mu");
        spec.controller.funnels.push_back(std::move(f));
      }
    }
  }
  return spec;
}

std::string dump_scenario(const ScenarioSpec& spec) {
  using detail::box_to_json;
  json root;
  root["dims"] = spec.dims;
  root["horizon"] = spec.horizon;
  root["epsilon"] = spec.epsilon;
  root["arena"] = box_to_json(spec.arena);
  root["agents"] = json::array();
  for (const auto& a : spec.agents) {
    root["agents"].push_back({{"name", a.name},
                              {"start", box_to_json(a.start)},
                              {"goal", box_to_json(a.goal)},
                              {"tube_degree_per_dim", a.tube_degree_per_dim},
                              {"min_width_per_dim", a.min_width_per_dim}});
  }
  root["obstacles"] = json::array();
  for (const auto& r : spec.obstacles) {
    json jk = json::array();
    for (const auto& k : r.keyframes) jk.push_back({{"t", k.time}, {"box", box_to_json(k.box)}});
    root["obstacles"].push_back({{"interpolation", to_string(r.interpolation)},
                                 {"sampling", to_string(r.sampling)},
                                 {"keyframes", jk}});
  }
  root["plant"] = {{"kind", spec.plant.kind}, {"g_sign", spec.plant.g_sign}};
  root["disturbance"] = {{"kind", spec.disturbance.kind},
                         {"bound", spec.disturbance.bound},
                         {"seed", spec.disturbance.seed}};
  json jc = {{"kappa", spec.controller.kappa}, {"e_max", spec.controller.e_max}};
  jc["funnels"] = json::array();
  for (const auto& f : spec.controller.funnels) {
    jc["funnels"].push_back({{"p", f.p}, {"q", f.q}, {"mu", f.mu}});
  }
  root["controller"] = jc;
  return root.dump(2) + "\n";
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ScenarioSpec spec = parse_scenario(ss.str());
  validate_scenario(spec);
  return spec;
}

void save_scenario(const ScenarioSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << dump_scenario(spec);
}

}  // namespace stt

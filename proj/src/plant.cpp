#include "stt/plant.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "stt/errors.hpp"

namespace stt {

PlantKind parse_plant_kind(const std::string& s) {
  if (s == "omnidirectional") return PlantKind::kOmnidirectional;
  if (s == "drone_chain") return PlantKind::kDroneChain;
  if (s == "single_integrator") return PlantKind::kSingleIntegrator;
  if (s == "custom") return PlantKind::kCustom;
  throw ValidationError("plant: unknown kind '" + s + "'");
}

const char* to_string(PlantKind k) {
  switch (k) {
    case PlantKind::kOmnidirectional: return "omnidirectional";
    case PlantKind::kDroneChain: return "drone_chain";
    case PlantKind::kSingleIntegrator: return "single_integrator";
    case PlantKind::kCustom: return "custom";
  }
  return "?";
}

PlantModel make_plant(const PlantSettings& settings, std::size_t output_dims) {
  PlantModel m;
  m.kind = parse_plant_kind(settings.kind);
  if (settings.g_sign == "positive") m.g_sign = 1;
  else if (settings.g_sign == "negative") m.g_sign = -1;
  else throw ValidationError("plant: g_sign must be positive or negative");
  m.outputs = output_dims;
  switch (m.kind) {
    case PlantKind::kOmnidirectional:
      if (output_dims != 2) throw ValidationError("plant: omnidirectional robot needs a 2-d scenario");
      m.n = 3;
      break;
    case PlantKind::kDroneChain:
      m.n = output_dims;
      m.stages = 2;
      break;
    case PlantKind::kSingleIntegrator:
      m.n = output_dims;
      break;
    case PlantKind::kCustom:
      throw ValidationError("plant: custom plants are built in code, not from a scenario");
  }
  return m;
}

AgentTubes controller_tubes(const PlantModel& model, const AgentTubes& tubes) {
  AgentTubes out = tubes;
  if (model.kind == PlantKind::kOmnidirectional) {
    FacePair heading;
    heading.lower = TubeFace{{-kHeadingHalfWidth}, FaceSide::kLower};
    heading.upper = TubeFace{{kHeadingHalfWidth}, FaceSide::kUpper};
    out.dims.push_back(heading);
    out.min_width.push_back(2.0 * kHeadingHalfWidth);
  }
  if (out.dims.size() != model.n) throw ValidationError("plant: tube dims do not match the plant");
  return out;
}

namespace {

void matvec_add(const std::vector<double>& g, const double* v, std::size_t n, double* out) {
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r] += g[r * n + c] * v[c];
}

std::vector<double> g_last(const PlantModel& m, const std::vector<double>& state, double t) {
  const std::size_t n = m.n;
  std::vector<double> g(n * n, 0.0);
  switch (m.kind) {
    case PlantKind::kOmnidirectional: {
      const double c = std::cos(state[2]);
      const double s = std::sin(state[2]);
      g = {c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0};
      break;
    }
    case PlantKind::kDroneChain:
    case PlantKind::kSingleIntegrator:
      for (std::size_t i = 0; i < n; ++i) g[i * n + i] = 1.0;
      break;
    case PlantKind::kCustom:
      g = m.custom.back().g(state, t);
      break;
  }
  return g;
}

}  // namespace

void dynamics(const PlantModel& m, const std::vector<double>& state, const std::vector<double>& u,
              const std::vector<double>& w, double t, std::vector<double>& dx) {
  const std::size_t n = m.n;
  dx.assign(m.state_size(), 0.0);
  for (double v : state)
    if (!std::isfinite(v)) throw IntegrityError("plant: non-finite state at t = " + std::to_string(t));
  switch (m.kind) {
    case PlantKind::kOmnidirectional: {
      const double c = std::cos(state[2]);
      const double s = std::sin(state[2]);
      dx[0] = c * u[0] - s * u[1];
      dx[1] = s * u[0] + c * u[1];
      dx[2] = u[2];
      break;
    }
    case PlantKind::kSingleIntegrator:
      for (std::size_t i = 0; i < n; ++i) dx[i] = u[i];
      break;
    case PlantKind::kDroneChain:
      for (std::size_t i = 0; i < n; ++i) {
        dx[i] = state[n + i];
        dx[n + i] = u[i];
      }
      break;
    case PlantKind::kCustom:
      for (std::size_t k = 0; k < m.stages; ++k) {
        const std::vector<double> f = m.custom[k].f(state, t);
        const std::vector<double> g = m.custom[k].g(state, t);
        for (std::size_t i = 0; i < n; ++i) dx[k * n + i] = f[i];
        const double* next = k + 1 < m.stages ? state.data() + (k + 1) * n : u.data();
        matvec_add(g, next, n, dx.data() + k * n);
      }
      break;
  }
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += w[i];
}

double g_sign_margin(const PlantModel& m, const std::vector<double>& state, double t) {
  const std::vector<double> g = g_last(m, state, t);
  const auto n = static_cast<Eigen::Index>(m.n);
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) G(r, c) = g[static_cast<std::size_t>(r * n + c)];
  const Eigen::MatrixXd S = 0.5 * (G + G.transpose()) * static_cast<double>(m.g_sign);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

DisturbanceKind parse_disturbance_kind(const std::string& s) {
  if (s == "zero") return DisturbanceKind::kZero;
  if (s == "uniform") return DisturbanceKind::kUniform;
  if (s == "sinusoidal") return DisturbanceKind::kSinusoidal;
  throw ValidationError("plant: unknown disturbance kind '" + s + "'");
}

Disturbance::Disturbance(const DisturbanceSettings& settings, std::size_t size, std::size_t agent)
    : kind_(parse_disturbance_kind(settings.kind)), bound_(settings.bound), w_(size, 0.0) {
  if (!(bound_ >= 0.0) || !std::isfinite(bound_)) throw ValidationError("plant: disturbance bound must be >= 0");
  std::seed_seq seq{static_cast<std::uint32_t>(settings.seed), static_cast<std::uint32_t>(settings.seed >> 32),
                    static_cast<std::uint32_t>(agent)};
  rng_.seed(seq);
  if (kind_ == DisturbanceKind::kSinusoidal) {
    std::uniform_real_distribution<double> f(0.1, 2.0);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < size; ++i) {
      freq_.push_back(f(rng_));
      phase_.push_back(ph(rng_));
    }
  }
}

const std::vector<double>& Disturbance::sample(double t) {
  switch (kind_) {
    case DisturbanceKind::kZero:
      break;
    case DisturbanceKind::kUniform: {
      std::uniform_real_distribution<double> d(-bound_, bound_);
      for (double& v : w_) v = bound_ > 0.0 ? d(rng_) : 0.0;
      break;
    }
    case DisturbanceKind::kSinusoidal:
      for (std::size_t i = 0; i < w_.size(); ++i) w_[i] = bound_ * std::sin(freq_[i] * t + phase_[i]);
      break;
  }
  for (double v : w_)
    if (std::abs(v) > bound_) throw IntegrityError("plant: disturbance sample exceeds its bound");
  return w_;
}

}  // namespace stt

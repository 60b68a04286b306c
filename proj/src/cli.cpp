#include "stt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <ostream>
#include <random>
#include <sstream>

#include "stt/errors.hpp"
#include "stt/lipschitz.hpp"
#include "stt/parallel.hpp"
#include "stt/sim.hpp"
#include "stt/synth.hpp"
#include "stt/verify.hpp"

namespace stt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string dump_manifest(const RunManifest& m) {
  json j;
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["args"] = m.args;
  j["config_paths"] = m.config_paths;
  json seeds = json::object();
  for (const auto& [name, value] : m.seeds) seeds[name] = value;
  j["seeds"] = seeds;
  j["threads"] = m.threads;
  j["wall_time_s"] = m.wall_time_s;
  j["exit_code"] = m.exit_code;
  json outs = json::array();
  for (const OutputRecord& o : m.outputs)
    outs.push_back({{"role", o.role}, {"path", o.path}, {"bytes", o.bytes}, {"hash", o.hash}});
  j["outputs"] = outs;
  return j.dump(2) + "\n";
}

RunManifest parse_manifest(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_paths = j.at("config_paths").get<std::vector<std::string>>();
    for (const auto& [name, value] : j.at("seeds").items()) m.seeds.emplace_back(name, value.get<std::uint64_t>());
    m.threads = j.at("threads").get<int>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    m.exit_code = j.at("exit_code").get<int>();
    for (const auto& o : j.at("outputs"))
      m.outputs.push_back({o.at("role").get<std::string>(), o.at("path").get<std::string>(),
                           o.at("bytes").get<std::size_t>(), o.at("hash").get<std::string>()});
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

}  // namespace

OutputRecord fingerprint(const std::string& role, const fs::path& path) {
  const std::string bytes = read_file(path);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(bytes);
  return {role, path.string(), bytes.size(), hex.str()};
}

namespace {

using Clock = std::chrono::steady_clock;

struct Context {
  std::ostream& out;
  std::ostream& err;
  RunManifest manifest;
  Clock::time_point start = Clock::now();
};

void finish_manifest(Context& ctx, const fs::path& path, int code) {
  ctx.manifest.exit_code = code;
  ctx.manifest.threads = worker_count();
  ctx.manifest.wall_time_s = std::chrono::duration<double>(Clock::now() - ctx.start).count();
  write_file(path, dump_manifest(ctx.manifest));
  ctx.out << "manifest: " << path.string() << "\n";
}

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string scenario;
  std::optional<double> epsilon;
  std::optional<int> degree;
  std::string out;
  std::size_t max_iterations = RefineOptions{}.max_iterations;
};

int cmd_synth(const SynthArgs& a, Context& ctx) {
  ScenarioSpec spec = load_scenario(a.scenario);
  if (a.epsilon) {
    if (!(*a.epsilon > 0.0)) throw ValidationError("--epsilon must be positive");
    spec.epsilon = *a.epsilon;
  }
  if (a.degree && *a.degree < 0) throw ValidationError("--degree must be >= 0");
  const fs::path tubes_path = a.out.empty() ? fs::path(fs::path(a.scenario).stem().string() + ".tubes") : fs::path(a.out);
  const fs::path cert_path = tubes_path.string() + ".cert.json";
  const fs::path manifest_path = tubes_path.string() + ".manifest.json";
  ctx.manifest.config_paths = {a.scenario};

  RefineOptions opt;
  opt.max_iterations = a.max_iterations;
  int code = kExitOk;
  try {
    const SynthesisResult r = synthesize(spec, template_from(spec, a.degree), opt);
    const double wall = std::chrono::duration<double>(Clock::now() - ctx.start).count();
    if (!r.solved) {
      ctx.err << "synthesis failed: the sampled problem has no solution for this template; "
                 "a higher-degree polynomial may be required (--degree)\n";
      code = kExitSynthesis;
    } else {
      const SynthesisCertificate& c = r.certificate;
      save_tubes(r.tubes, tubes_path);
      write_file(cert_path, dump_certificate(c));
      ctx.manifest.outputs.push_back(fingerprint("tubes", tubes_path));
      ctx.manifest.outputs.push_back(fingerprint("certificate", cert_path));
      ctx.out << "eta*      " << fmt(c.eta_star, 10) << "\n"
              << "L_L, L_U  " << fmt(c.L_L) << ", " << fmt(c.L_U) << " (" << c.lipschitz_source << ")\n"
              << "L         " << fmt(c.L) << "\n"
              << "epsilon   " << fmt(c.epsilon) << "\n"
              << "margin    " << fmt(c.margin, 10) << (c.passed ? "  (certified)" : "  (NOT certified)") << "\n"
              << "samples   " << r.time_samples << " times, " << r.sampled_rows << " rows\n"
              << "search    " << r.iterations << " batches, " << r.lp_solves << " LP solves\n"
              << "arena     worst excess " << fmt(r.worst_arena) << "\n"
              << "wall time " << fmt(wall, 4) << " s\n"
              << "tubes: " << tubes_path.string() << "\ncertificate: " << cert_path.string() << "\n";
      if (!c.passed) {
        ctx.err << "synthesis failed: margin eta* + L eps = " << fmt(c.margin) << " > 0; "
                << "a higher-degree polynomial may be required (--degree)\n";
        code = kExitSynthesis;
      }
    }
  } catch (const SynthesisError& e) {
    ctx.err << "synthesis failed: " << e.what() << "\na higher-degree polynomial may be required (--degree)\n";
    code = kExitSynthesis;
  }
  finish_manifest(ctx, manifest_path, code);
  return code;
}

// ---- simulate -------------------------------------------------------------

struct SimArgs {
  std::string scenario;
  std::string tubes;
  std::optional<double> dt;
  std::optional<double> kappa;
  std::optional<std::uint64_t> seed;
  std::size_t substeps = 0;
  std::string out;
  bool force = false;
};

bool certified(const fs::path& tubes_path) {
  const fs::path cert = tubes_path.string() + ".cert.json";
  if (!fs::exists(cert)) return false;
  try {
    return json::parse(read_file(cert)).at("passed").get<bool>();
  } catch (const json::exception&) {
    return false;
  }
}

int cmd_simulate(const SimArgs& a, Context& ctx) {
  const ScenarioSpec spec = load_scenario(a.scenario);
  const TubeSet tubes = load_tubes(a.tubes);
  if (!a.force && !certified(a.tubes)) {
    ctx.err << "simulate: " << a.tubes << " has no passing certificate (" << a.tubes
            << ".cert.json); pass --force to simulate anyway\n";
    return kExitUsage;
  }
  const std::string prefix = a.out.empty() ? fs::path(a.scenario).stem().string() + "_run" : a.out;
  ctx.manifest.config_paths = {a.scenario, a.tubes};

  SimConfig cfg;
  cfg.dt = a.dt.value_or(spec.horizon * 1e-4);
  cfg.substeps = a.substeps;
  cfg.controller = spec.controller;
  if (a.kappa) cfg.controller.kappa = {*a.kappa};
  cfg.disturbance = spec.disturbance;
  if (a.seed) cfg.disturbance.seed = *a.seed;
  ctx.manifest.seeds.emplace_back("disturbance", cfg.disturbance.seed);

  const PlantModel model = make_plant(spec.plant, spec.dims);
  const std::vector<Trajectory> trajs = run_closed_loop(spec, tubes, model, cfg);
  const VerificationReport rep = verify_run(spec, tubes, trajs);

  const fs::path csv = prefix + ".csv";
  const fs::path report = prefix + ".report.json";
  const fs::path summary = prefix + ".summary.txt";
  {
    std::ostringstream s;
    write_trajectories_csv(trajs, s);
    write_file(csv, s.str());
  }
  write_file(report, dump_report(rep));
  const std::string text = summarize_report(rep);
  write_file(summary, text);
  for (const auto& [role, path] : {std::pair{"trajectories", csv}, {"report", report}, {"summary", summary}})
    ctx.manifest.outputs.push_back(fingerprint(role, path));

  ctx.out << "dt " << fmt(cfg.dt) << ", RK4 substeps " << (trajs.empty() ? 0 : trajs.front().substeps)
          << ", disturbance " << cfg.disturbance.kind << " bound " << fmt(cfg.disturbance.bound) << "\n"
          << text << "trajectories: " << csv.string() << "\nreport: " << report.string() << "\n";
  const int code = rep.passed() ? kExitOk : kExitVerification;
  if (code != kExitOk) ctx.err << "verification failed: " << rep.first_failure() << "\n";
  finish_manifest(ctx, prefix + ".manifest.json", code);
  return code;
}

// ---- lipschitz ------------------------------------------------------------

struct LipArgs {
  std::string tubes;
  std::optional<double> alpha;
  std::size_t pairs = 100;
  std::size_t reps = 50;
  std::uint64_t seed = 1;
  std::size_t sweep = 0;
  std::string out;
};

int cmd_lipschitz(const LipArgs& a, Context& ctx) {
  const TubeSet tubes = load_tubes(a.tubes);
  SlopeSampleConfig cfg = SlopeSampleConfig::defaults_for(tubes.horizon);
  if (a.alpha) cfg.alpha = *a.alpha;
  cfg.pair_count = a.pairs;
  cfg.repetitions = a.reps;
  cfg.rng_seed = a.seed;
  cfg.validate();
  ctx.manifest.config_paths = {a.tubes};
  ctx.manifest.seeds.emplace_back("lipschitz", cfg.rng_seed);

  const LipschitzEstimate est = estimate_L(tubes, cfg);
  json j;
  j["alpha"] = cfg.alpha;
  j["pairs"] = cfg.pair_count;
  j["repetitions"] = cfg.repetitions;
  j["seed"] = cfg.rng_seed;
  json faces = json::array();
  char line[200];
  ctx.out << " agent dim side   estimate   analytic   fit\n";
  for (const FaceEstimate& f : est.faces) {
    const char* side = f.side == FaceSide::kLower ? "lower" : "upper";
    std::snprintf(line, sizeof line, " %5zu %3zu %-5s %10.6f %10.6f   %s (shape %.3g, scale %.3g)\n", f.agent + 1,
                  f.dim + 1, side, f.fit.location, f.analytic, to_string(f.fit.status), f.fit.shape, f.fit.scale);
    ctx.out << line;
    faces.push_back({{"agent", f.agent + 1}, {"dim", f.dim + 1}, {"side", side}, {"location", f.fit.location},
                     {"scale", f.fit.scale}, {"shape", f.fit.shape}, {"status", to_string(f.fit.status)},
                     {"analytic", f.analytic}});
  }
  const double L = composite_lipschitz(est.L_L, est.L_U);
  ctx.out << "L_L " << fmt(est.L_L) << " (analytic " << fmt(est.analytic_L_L) << ")\n"
          << "L_U " << fmt(est.L_U) << " (analytic " << fmt(est.analytic_L_U) << ")\n"
          << "L   " << fmt(L) << " (analytic " << fmt(composite_lipschitz(est.analytic_L_L, est.analytic_L_U))
          << ")\n";
  j["faces"] = faces;
  j["L_L"] = est.L_L;
  j["L_U"] = est.L_U;
  j["L"] = L;
  j["analytic_L_L"] = est.analytic_L_L;
  j["analytic_L_U"] = est.analytic_L_U;

  if (a.sweep > 0) {
    json trend = json::array();
    ctx.out << "convergence: alpha halves, pairs and repetitions double\n";
    SlopeSampleConfig c = cfg;
    for (std::size_t level = 0; level <= a.sweep; ++level) {
      const LipschitzEstimate e = estimate_L(tubes, c);
      const double err_l = std::abs(e.L_L - e.analytic_L_L);
      const double err_u = std::abs(e.L_U - e.analytic_L_U);
      std::snprintf(line, sizeof line, "  alpha %-10.4g N %-6zu R %-6zu |L_L err| %.3e  |L_U err| %.3e\n", c.alpha,
                    c.pair_count, c.repetitions, err_l, err_u);
      ctx.out << line;
      trend.push_back({{"alpha", c.alpha}, {"pairs", c.pair_count}, {"repetitions", c.repetitions},
                       {"L_L", e.L_L}, {"L_U", e.L_U}});
      c.alpha /= 2.0;
      c.pair_count *= 2;
      c.repetitions *= 2;
    }
    j["trend"] = trend;
  }

  const fs::path out = a.out.empty() ? fs::path(fs::path(a.tubes).stem().string() + ".lipschitz.json") : fs::path(a.out);
  write_file(out, j.dump(2) + "\n");
  ctx.manifest.outputs.push_back(fingerprint("estimates", out));
  ctx.out << "estimates: " << out.string() << "\n";
  finish_manifest(ctx, out.string() + ".manifest.json", kExitOk);
  return kExitOk;
}

// ---- replay ---------------------------------------------------------------

int cmd_replay(const std::string& manifest_path, Context& ctx) {
  const RunManifest m = parse_manifest(read_file(manifest_path));
  if (m.command == "replay") throw ValidationError("replay: cannot replay a replay");
  if (m.tool_version != kToolVersion)
    ctx.err << "replay: manifest written by version " << m.tool_version << ", this is " << kToolVersion << "\n";

  // Rerun with every output redirected into a scratch directory.
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("stt-replay-" + std::to_string(rd()));
  fs::create_directories(dir);
  std::vector<std::string> args = m.args;
  const std::string out_value = [&] {
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") return args[i + 1];
    return std::string();
  }();
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--out") args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
  args.push_back("--out");
  const std::string base = out_value.empty() ? "replay" : fs::path(out_value).filename().string();
  args.push_back((dir / base).string());

  std::ostringstream sink;
  const int code = run(args, sink, ctx.err);
  const RunManifest again = parse_manifest(read_file((dir / base).string() + ".manifest.json"));

  bool same = code == m.exit_code && again.outputs.size() == m.outputs.size();
  ctx.out << "replay of '" << m.command << "': exit " << code << " (recorded " << m.exit_code << ")\n";
  for (std::size_t i = 0; i < m.outputs.size() && i < again.outputs.size(); ++i) {
    const bool eq = m.outputs[i].role == again.outputs[i].role && m.outputs[i].hash == again.outputs[i].hash &&
                    m.outputs[i].bytes == again.outputs[i].bytes;
    same = same && eq;
    ctx.out << "  " << m.outputs[i].role << ": " << (eq ? "identical" : "DIFFERS") << " (" << m.outputs[i].path
            << ")\n";
  }
  fs::remove_all(dir);
  ctx.out << (same ? "replay reproduced every output\n" : "replay did NOT reproduce the run\n");
  return same ? kExitOk : kExitVerification;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatiotemporal tube synthesis and closed-loop verification"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "synthesize certified tubes for a scenario");
  synth->add_option("scenario", sa.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  synth->add_option("--epsilon", sa.epsilon, "time-sampling radius (overrides the scenario)");
  synth->add_option("--degree", sa.degree, "polynomial degree for every face");
  synth->add_option("--out", sa.out, "tubes file (default <scenario>.tubes)");
  synth->add_option("--max-iterations", sa.max_iterations, "candidate batches in the assignment search");

  SimArgs si;
  auto* sim = app.add_subcommand("simulate", "closed-loop simulation and verification");
  sim->add_option("scenario", si.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("tubes", si.tubes, "tubes file")->required()->check(CLI::ExistingFile);
  sim->add_option("--dt", si.dt, "sample step (default t_c / 10^4)");
  sim->add_option("--kappa", si.kappa, "gain for every stage (overrides the scenario)");
  sim->add_option("--seed", si.seed, "disturbance seed (overrides the scenario)");
  sim->add_option("--substeps", si.substeps, "RK4 steps per sample (0: from the stiffness bound)");
  sim->add_option("--out", si.out, "output prefix (default <scenario>_run)");
  sim->add_flag("--force", si.force, "simulate tubes without a passing certificate");

  LipArgs la;
  auto* lip = app.add_subcommand("lipschitz", "data-driven Lipschitz estimates of tube faces");
  lip->add_option("tubes", la.tubes, "tubes file")->required()->check(CLI::ExistingFile);
  lip->add_option("--alpha", la.alpha, "max time-pair separation (default t_c / 1000)");
  lip->add_option("--pairs", la.pairs, "pairs per block");
  lip->add_option("--reps", la.reps, "blocks per face");
  lip->add_option("--seed", la.seed, "rng seed");
  lip->add_option("--sweep", la.sweep, "halvings of alpha to print the convergence trend");
  lip->add_option("--out", la.out, "estimates file (default <tubes>.lipschitz.json)");

  std::string manifest;
  auto* replay = app.add_subcommand("replay", "rerun a manifest and compare outputs bit for bit");
  replay->add_option("manifest", manifest, "manifest file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx{out, err, {}};
  ctx.manifest.args = args;
  try {
    if (synth->parsed()) {
      ctx.manifest.command = "synth";
      return cmd_synth(sa, ctx);
    }
    if (sim->parsed()) {
      ctx.manifest.command = "simulate";
      return cmd_simulate(si, ctx);
    }
    if (lip->parsed()) {
      ctx.manifest.command = "lipschitz";
      return cmd_lipschitz(la, ctx);
    }
    ctx.manifest.command = "replay";
    return cmd_replay(manifest, ctx);
  } catch (const SynthesisError& e) {
    err << "synthesis failed: " << e.what() << "\n";
    return kExitSynthesis;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace stt::cli

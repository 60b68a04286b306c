// Serial reference vs OpenMP path for every data-parallel kernel. Arg 0 is
// Exec::kSerial, arg 1 Exec::kParallel; STT_THREADS sets the worker count.

#include <benchmark/benchmark.h>

#include <filesystem>

#include "stt/lipschitz.hpp"
#include "stt/plant.hpp"
#include "stt/sampling.hpp"
#include "stt/sim.hpp"
#include "stt/synth.hpp"
#include "stt/verify.hpp"

using namespace stt;

namespace {

std::filesystem::path data(const char* name) { return std::filesystem::path(STT_SCENARIO_DIR) / name; }

Exec exec_of(const benchmark::State& s) { return s.range(0) == 0 ? Exec::kSerial : Exec::kParallel; }

struct Robots {
  ScenarioSpec spec = load_scenario(data("robots.scenario"));
  TubeSet published = load_tubes(data("robots_published.tubes"));
  PlantModel model = make_plant(spec.plant, spec.dims);
};

const Robots& robots() {
  static const Robots r;
  return r;
}

void BM_validate_tubes(benchmark::State& state) {
  const Robots& r = robots();
  for (auto _ : state) benchmark::DoNotOptimize(validate_tubes(r.published, r.spec, 1e-3, 0.01, exec_of(state)));
}

void BM_scan_rows(benchmark::State& state) {
  const Robots& r = robots();
  static const SopInstance inst = build_sop(r.spec, sample_unsafe(r.spec), template_from(r.spec));
  static const DisjunctAssignment a = seed_assignment(inst);
  static const SopSolution sol = solve_sop(inst, a);
  for (auto _ : state) benchmark::DoNotOptimize(scan_rows(inst, a, sol.x, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(inst.row_count()));
}

void BM_estimate_L(benchmark::State& state) {
  const Robots& r = robots();
  for (auto _ : state) benchmark::DoNotOptimize(estimate_L(r.published, SlopeSampleConfig{}, exec_of(state)));
}

void BM_run_closed_loop(benchmark::State& state) {
  const Robots& r = robots();
  SimConfig cfg;
  cfg.dt = 1e-2;
  cfg.disturbance = r.spec.disturbance;
  cfg.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(run_closed_loop(r.spec, r.published, r.model, cfg));
}

void BM_check_ca(benchmark::State& state) {
  const Robots& r = robots();
  static const std::vector<Trajectory> trajs = [&] {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.disturbance = r.spec.disturbance;
    return run_closed_loop(r.spec, r.published, r.model, cfg);
  }();
  for (auto _ : state) benchmark::DoNotOptimize(check_ca(trajs, r.spec.dims, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_validate_tubes)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_scan_rows)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_estimate_L)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_run_closed_loop)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_check_ca)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

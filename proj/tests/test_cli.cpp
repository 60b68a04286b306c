#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "common.hpp"
#include "stt/cli.hpp"

using namespace stt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run stt_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Fresh scratch directory under the test's working directory.
fs::path scratch(const std::string& name) {
  const fs::path d = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::string robots = test::data("robots.scenario").string();

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(stt_run({}).code == cli::kExitUsage);
  CHECK(stt_run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(stt_run({"synth", "/no/such.scenario"}).code == cli::kExitUsage);
  CHECK(stt_run({"synth", robots, "--epsilon", "-1"}).code == cli::kExitUsage);
  CHECK(stt_run({"--version"}).code == cli::kExitOk);
}

TEST_CASE("synth writes certified tubes, degree 0 exits 2") {
  const fs::path d = scratch("synth");
  const std::string tubes = (d / "robots.tubes").string();
  const Run ok = stt_run({"synth", robots, "--out", tubes});
  INFO(ok.err);
  REQUIRE(ok.code == cli::kExitOk);
  CHECK(ok.out.find("(certified)") != std::string::npos);
  CHECK(load_tubes(tubes).agent_count() == 4);
  const auto cert = nlohmann::json::parse(slurp(tubes + ".cert.json"));
  CHECK(cert.at("passed").get<bool>());
  CHECK(cert.at("margin").get<double>() <= 0.0);
  const cli::RunManifest m = cli::parse_manifest(slurp(tubes + ".manifest.json"));
  CHECK(m.command == "synth");
  CHECK(m.exit_code == 0);
  REQUIRE(m.outputs.size() == 2);
  CHECK(m.outputs[0].hash == cli::fingerprint("tubes", tubes).hash);

  const Run bad = stt_run({"synth", robots, "--degree", "0", "--out", (d / "deg0.tubes").string()});
  CHECK(bad.code == cli::kExitSynthesis);
  CHECK(bad.err.find("higher-degree") != std::string::npos);
}

TEST_CASE("simulate needs a certificate unless forced") {
  const fs::path d = scratch("force");
  const fs::path tubes = d / "published.tubes";
  fs::copy_file(test::data("robots_published.tubes"), tubes);
  const std::string prefix = (d / "run").string();
  const Run refused = stt_run({"simulate", robots, tubes.string(), "--dt", "0.01", "--out", prefix});
  CHECK(refused.code == cli::kExitUsage);
  CHECK(refused.err.find("--force") != std::string::npos);
  CHECK_FALSE(fs::exists(prefix + ".csv"));

  const Run forced = stt_run({"simulate", robots, tubes.string(), "--dt", "0.01", "--force", "--out", prefix});
  INFO(forced.err);
  CHECK(forced.code == cli::kExitOk);
  CHECK(fs::exists(prefix + ".csv"));
  CHECK(fs::exists(prefix + ".report.json"));
  CHECK(fs::exists(prefix + ".summary.txt"));
}

TEST_CASE("simulate is reproducible and replayable") {
  const fs::path d = scratch("sim");
  const std::string tubes = (d / "robots.tubes").string();
  REQUIRE(stt_run({"synth", robots, "--out", tubes}).code == cli::kExitOk);

  const std::string a = (d / "a").string();
  const std::string b = (d / "b").string();
  const Run ra = stt_run({"simulate", robots, tubes, "--dt", "0.01", "--kappa", "5", "--seed", "3", "--out", a});
  INFO(ra.err);
  REQUIRE(ra.code == cli::kExitOk);
  REQUIRE(stt_run({"simulate", robots, tubes, "--dt", "0.01", "--kappa", "5", "--seed", "3", "--out", b}).code ==
          cli::kExitOk);
  CHECK(slurp(a + ".csv") == slurp(b + ".csv"));
  CHECK(slurp(a + ".report.json") == slurp(b + ".report.json"));

  const Run rep = stt_run({"replay", a + ".manifest.json"});
  INFO(rep.out);
  CHECK(rep.code == cli::kExitOk);
  CHECK(rep.out.find("replay reproduced every output") != std::string::npos);

  // A tampered record no longer replays.
  cli::RunManifest m = cli::parse_manifest(slurp(a + ".manifest.json"));
  m.outputs[0].hash = "0";
  std::ofstream(d / "tampered.json") << cli::dump_manifest(m);
  CHECK(stt_run({"replay", (d / "tampered.json").string()}).code == cli::kExitVerification);
}

TEST_CASE("coarse sample step still verifies") {
  const fs::path d = scratch("coarse");
  const std::string tubes = (d / "robots.tubes").string();
  REQUIRE(stt_run({"synth", robots, "--out", tubes}).code == cli::kExitOk);
  const Run r = stt_run({"simulate", robots, tubes, "--dt", "0.5", "--out", (d / "coarse").string()});
  INFO(r.err);
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("RK4 substeps") != std::string::npos);
}

TEST_CASE("lipschitz on a linear tube recovers its slope") {
  const fs::path d = scratch("lip");
  TubeSet t;
  t.horizon = 10.0;
  AgentTubes a;
  a.dims.push_back({TubeFace{{0.0, 0.75}, FaceSide::kLower}, TubeFace{{1.0, -0.25}, FaceSide::kUpper}});
  a.min_width.push_back(0.1);
  t.agents.push_back(a);
  const fs::path tubes = d / "linear.tubes";
  save_tubes(t, tubes);
  const std::string out = (d / "linear.json").string();
  // Difference quotients carry ~1e-11 rounding noise, so the fit lands within
  // a few noise widths of the slope rather than on it.
  const Run r = stt_run({"lipschitz", tubes.string(), "--sweep", "1", "--out", out});
  INFO(r.err);
  REQUIRE(r.code == cli::kExitOk);
  const auto j = nlohmann::json::parse(slurp(out));
  CHECK(j.at("L_L").get<double>() == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(j.at("L_U").get<double>() == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(j.at("trend").size() == 2);
  CHECK(stt_run({"replay", out + ".manifest.json"}).code == cli::kExitOk);
}

TEST_CASE("manifest text round-trips") {
  cli::RunManifest m;
  m.command = "simulate";
  m.args = {"simulate", "a b.scenario", "x.tubes"};
  m.config_paths = {"a b.scenario"};
  m.seeds = {{"disturbance", 18446744073709551615ull}};
  m.threads = 4;
  m.wall_time_s = 1.25;
  m.exit_code = 3;
  m.outputs.push_back({"report", "r.json", 120, "abc"});
  const cli::RunManifest back = cli::parse_manifest(cli::dump_manifest(m));
  CHECK(back.args == m.args);
  CHECK(back.seeds == m.seeds);
  CHECK(back.exit_code == 3);
  CHECK(back.outputs[0].hash == "abc");
  CHECK(back.outputs[0].bytes == 120);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace stt::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,         // bad flags or unreadable input
  kExitSynthesis = 2,     // no certified tubes
  kExitVerification = 3,  // a closed-loop check failed, or a replay differed
};

struct OutputRecord {
  std::string role;  // tubes, certificate, trajectories, report, ...
  std::string path;
  std::size_t bytes = 0;
  std::string hash;  // hex of std::hash over the file bytes
};

/// Everything needed to rerun a command: its arguments, the inputs it read,
/// the seeds, and fingerprints of what it wrote.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::vector<std::string> args;  // after the program name
  std::vector<std::string> config_paths;
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
  int threads = 1;
  double wall_time_s = 0.0;
  int exit_code = 0;
  std::vector<OutputRecord> outputs;
};

std::string dump_manifest(const RunManifest& m);
RunManifest parse_manifest(const std::string& text);

OutputRecord fingerprint(const std::string& role, const std::filesystem::path& path);

/// Runs `stt <args...>`; returns the exit code. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stt::cli

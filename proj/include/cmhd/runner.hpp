/// @file runner.hpp
/// @brief Batch commands behind the CLI: verify, reconstruct, stability, manufacture, selftest.
#ifndef CMHD_RUNNER_HPP
#define CMHD_RUNNER_HPP

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cmhd/config.hpp"

namespace cmhd {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitPrecondition = 2, kExitNumerical = 3 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "CARLEMAN_MHD_OUT";
/// Bumped whenever a CSV column or JSON key changes meaning.
inline constexpr int kReportVersion = 1;

struct CommandOptions {
  std::string command;
  std::string config_path;  ///< empty: built-in defaults
  std::string out_dir;      ///< empty: config, then environment, then "out"
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;  ///< replaces the seed list by seed, seed+1, ...
};

std::vector<std::string> known_commands();

/// Reads the config (or defaults), checks the sections the command needs and applies
/// the command-line overrides. Throws ConfigError.
ExperimentConfig resolve_config(const CommandOptions& o);
std::string resolve_out_dir(const CommandOptions& o, const ExperimentConfig& cfg);

/// Runs one command into out_dir and returns its exit code. Every failure leaves
/// error.json in out_dir.
int run_command(const std::string& command, const ExperimentConfig& cfg,
                const std::string& out_dir, std::ostream& log);

/// resolve_config + run_command; config errors map to exit code 1.
int run(const CommandOptions& o, std::ostream& log);

/// Report text with the timestamp lines removed, for re-run comparisons.
std::string strip_timestamp(const std::string& text);

}  // namespace cmhd

#endif  // CMHD_RUNNER_HPP

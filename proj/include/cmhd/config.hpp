/// @file config.hpp
/// @brief Experiment configuration: INI text with [section] headers and key = value lines.
#ifndef CMHD_CONFIG_HPP
#define CMHD_CONFIG_HPP

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmhd/inverse.hpp"

namespace cmhd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int n = 24;
  int nt = 48;
  double T = 1.0;
  double t0 = 0.5;
};

struct WeightConfig {
  std::vector<double> lambda_list{1, 2, 3};
  std::vector<double> s_list{2, 4, 8, 16};
  double beta_margin = 0.1;
  double eps = 0.125;
  double spread_threshold = 3.0;
  double endpoint_s = 8.0;
};

struct ScenarioConfig {
  std::string recipe = "default";
  double diff_scale = 1.0;
  bool envelope = true;
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct StabilityConfig {
  std::vector<double> sigmas{1e-4, 1e-3, 1e-2};
  double noisy_rho_reg_factor = 1e-4;
  double tol = 1e-8;
};

struct ExperimentConfig {
  GridConfig grid;
  WeightConfig weights;
  ScenarioConfig scenario;
  std::vector<std::string> estimates;  ///< verify ids; empty means every known id
  ReconParams recon;
  double recon_sigma = 0.0;  ///< noise level of the single reconstruct run
  StabilityConfig stability;
  int threads = 1;
  std::string output_dir;  ///< empty: command line, then environment, then "out"
  std::set<std::string> sections;  ///< sections present in the source text
};

/// Throws ConfigError naming the line, section or key at fault.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");
ExperimentConfig parse_config_file(const std::string& path);

/// Every key with its value in a fixed order; parsing the dump gives the same config.
std::string canonical_dump(const ExperimentConfig& c);

/// Sections a command cannot run without.
std::vector<std::string> required_sections(const std::string& command);
/// Throws ConfigError for the first missing section.
void require_sections(const ExperimentConfig& c, const std::string& command);

}  // namespace cmhd

#endif  // CMHD_CONFIG_HPP

/// @file selftest.hpp
/// @brief Acceptance checks shared by the `selftest` command and the acceptance test binary.
#ifndef CMHD_SELFTEST_HPP
#define CMHD_SELFTEST_HPP

#include <functional>
#include <string>
#include <vector>

namespace cmhd {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool pass = false;
  /// Invariant checks decide the exit code. Experiment checks put thresholds on
  /// empirical quantities (ratio spreads, fitted exponents) and are reported only.
  bool gating = true;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  int threads = 1;
  std::string scratch_dir;  ///< for the re-run comparison; empty means the system temp dir
};

/// Criteria 1 to 8. Exceptions inside a check turn into a failed check.
std::vector<CheckResult> check_criterion(int criterion, const SelftestOptions& opt);

struct SelftestReport {
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  bool gating_pass() const;
  bool all_pass() const;
};

/// Runs criteria 1 to 8, then the wall-clock budget (criterion 9). The callback sees
/// each result as soon as it is known.
SelftestReport run_selftest(const SelftestOptions& opt,
                            const std::function<void(const CheckResult&)>& on_result = {});

/// One line per check: "PASS|FAIL [criterion] name: detail (seconds)".
std::string format_check(const CheckResult& c);

}  // namespace cmhd

#endif  // CMHD_SELFTEST_HPP

// Acceptance run: every check, then one verdict line per criterion.
// Exits nonzero only when an invariant (gating) check fails; experiment checks are
// reported as they come out.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include "cmhd/selftest.hpp"

int main(int argc, char** argv) {
  cmhd::SelftestOptions opt;
  opt.scratch_dir = (std::filesystem::temp_directory_path() / "cmhd_acceptance").string();
  if (argc > 1) opt.threads = std::max(1, std::atoi(argv[1]));

  const cmhd::SelftestReport r = cmhd::run_selftest(opt, [](const cmhd::CheckResult& c) {
    std::cout << cmhd::format_check(c) << std::endl;
  });

  struct Tally {
    int gating_fail = 0, experiment_fail = 0, total = 0;
  };
  std::map<int, Tally> per;
  for (const auto& c : r.checks) {
    Tally& t = per[c.criterion];
    ++t.total;
    if (!c.pass) ++(c.gating ? t.gating_fail : t.experiment_fail);
  }
  std::cout << "\n";
  for (int k = 1; k <= 9; ++k) {
    const Tally t = per[k];
    std::cout << "criterion " << k << ": ";
    if (t.total == 0)
      std::cout << "FAIL (no checks ran)";
    else if (t.gating_fail == 0 && t.experiment_fail == 0)
      std::cout << "PASS";
    else if (t.gating_fail == 0)
      std::cout << "FAIL (" << t.experiment_fail << " experiment check"
                << (t.experiment_fail == 1 ? "" : "s") << ", invariants pass)";
    else
      std::cout << "FAIL (" << t.gating_fail << " invariant check"
                << (t.gating_fail == 1 ? "" : "s") << ")";
    std::cout << "\n";
  }
  std::cout << "total " << r.seconds << " s; invariants " << (r.gating_pass() ? "pass" : "fail")
            << "\n";
  return r.gating_pass() ? 0 : 1;
}

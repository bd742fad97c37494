#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cmhd/runner.hpp"

using namespace cmhd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("CMHD_TEST_OUT");
  const fs::path dir = (env ? fs::path(env) : fs::temp_directory_path() / "cmhd_tests") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

/// Lines that are neither comments nor the column header, optionally only those
/// ending in the given field.
int data_rows(const fs::path& csv, const std::string& last_field = "") {
  std::istringstream in(slurp(csv));
  std::string line;
  int n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    if (last_field.empty() || ends_with(line, "," + last_field)) ++n;
  }
  return n;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

const std::string kSmall = std::string(CMHD_TEST_DATA) + "/small.ini";

/// Writes an ini next to the outputs and returns its path.
std::string write_ini(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "case.ini";
  std::ofstream(p) << text;
  return p.string();
}

int run_quiet(const CommandOptions& o) {
  std::ostringstream log;
  return run(o, log);
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("verify writes one row per (s, lambda)") {
  const fs::path out = scratch("verify");
  CHECK(run_quiet({"verify", kSmall, out.string(), {}, {}}) == kExitOk);
  for (const char* f : {"verify_elliptic.csv", "verify_first_order_P.csv"}) {
    CHECK(data_rows(out / f, "ok") == 4);
    CHECK(data_rows(out / f, "summary") == 2);
    CHECK(data_rows(out / f) == 6);
  }
  const auto j = read_json(out / "verify_summary.json");
  CHECK(j["version"] == kReportVersion);
  CHECK(j["report"] == "verify");
  CHECK_FALSE(fs::exists(out / "error.json"));
}

TEST_CASE("stability writes six data rows and a fit") {
  const fs::path out = scratch("stability");
  CHECK(run_quiet({"stability", kSmall, out.string(), {}, {}}) == kExitOk);
  CHECK(data_rows(out / "stability_global.csv") == 7);
  const auto j = read_json(out / "stability_global.json");
  CHECK(j["version"] == kReportVersion);
}

TEST_CASE("exit codes") {
  SUBCASE("config error") {
    const fs::path out = scratch("exit_config");
    const std::string ini = write_ini(out, "[weights]\nlamda_list = 1\n");
    CHECK(run_quiet({"verify", ini, out.string(), {}, {}}) == kExitConfig);
    const auto j = read_json(out / "error.json");
    CHECK(j["exit_code"] == kExitConfig);
    CHECK(j["message"].get<std::string>().find("lamda_list") != std::string::npos);
    CHECK(run_quiet({"launch", "", out.string(), {}, {}}) == kExitConfig);
  }
  SUBCASE("precondition") {
    const fs::path out = scratch("exit_precondition");
    const std::string ini = write_ini(out, "[grid]\nn = 8\nnt = 6\n[scenario]\nrecipe = default\n");
    CHECK(run_quiet({"manufacture", ini, out.string(), {}, {}}) == kExitPrecondition);
    CHECK(read_json(out / "error.json")["kind"] == "precondition");
  }
  SUBCASE("assumption failure") {
    const fs::path out = scratch("exit_assumption");
    const std::string ini = write_ini(out, "[grid]\nn = 8\nnt = 8\n[scenario]\nrecipe = a1_fail\n");
    CHECK(run_quiet({"manufacture", ini, out.string(), {}, {}}) == kExitNumerical);
    const auto j = read_json(out / "manufacture.json");
    CHECK(j.contains("assumptions"));
    CHECK(fs::exists(out / "error.json"));
  }
  SUBCASE("non-convergence") {
    const fs::path out = scratch("exit_iterations");
    const std::string ini = write_ini(out, "[grid]\nn = 8\nnt = 16\n[reconstruction]\nmax_iter = 1\n");
    CHECK(run_quiet({"reconstruct", ini, out.string(), {}, {}}) == kExitNumerical);
    CHECK(fs::exists(out / "reconstruct.json"));
    CHECK(read_json(out / "error.json")["exit_code"] == kExitNumerical);
  }
}

TEST_CASE("seed override and output directory precedence") {
  const fs::path out = scratch("seed");
  CHECK(run_quiet({"reconstruct", kSmall, out.string(), {}, std::uint64_t{41}}) == kExitOk);
  CHECK(read_json(out / "reconstruct.json")["seed"] == 41);

  CommandOptions o{"verify", "", "", {}, {}};
  ExperimentConfig cfg;
  ::setenv(kOutDirEnv, "from_env", 1);
  CHECK(resolve_out_dir(o, cfg) == "from_env");
  cfg.output_dir = "from_config";
  CHECK(resolve_out_dir(o, cfg) == "from_config");
  o.out_dir = "from_cli";
  CHECK(resolve_out_dir(o, cfg) == "from_cli");
  ::unsetenv(kOutDirEnv);
  CHECK(resolve_out_dir(CommandOptions{}, ExperimentConfig{}) == "out");

  o.threads = 3;
  o.seed = 10;
  o.config_path = kSmall;
  const ExperimentConfig r = resolve_config(o);
  CHECK(r.threads == 3);
  CHECK(r.scenario.seeds == std::vector<std::uint64_t>{10, 11, 12});
}

TEST_CASE("timestamp stripping") {
  const std::string text = "# generated 2026-01-01T00:00:00Z\n# report x\n{\n  \"generated\": \"now\",\n  \"a\": 1\n}\n";
  CHECK(strip_timestamp(text) == "# report x\n{\n  \"a\": 1\n}\n");
}

}  // TEST_SUITE

#include <doctest.h>

#include <string>

#include "cmhd/carleman.hpp"
#include "cmhd/config.hpp"

using namespace cmhd;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "t.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("minimal config fills the defaults") {
  const ExperimentConfig c = parse_config_text("[grid]\nn = 12\n");
  CHECK(c.grid.n == 12);
  CHECK(c.grid.nt == 48);
  CHECK(c.weights.s_list == std::vector<double>{2, 4, 8, 16});
  CHECK(c.weights.lambda_list == std::vector<double>{1, 2, 3});
  CHECK(c.recon.mode == ReconMode::Global);
  CHECK(c.sections.count("grid") == 1);
  CHECK(c.sections.count("weights") == 0);
}

TEST_CASE("canonical dump round-trips") {
  const ExperimentConfig c = parse_config_text(
      "[grid]\nn = 10\nnt = 20\n[weights]\nlambda_list = 1.5, 2\neps = 0.1\n"
      "[reconstruction]\nmode = LOCAL\nweighting = uniform\nderivatives = realistic\n"
      "rho_reg_factor = 1e-5\nsigma = 0.01\n[scenario]\nseeds = 4, 5\nenvelope = false\n"
      "[verify]\nestimates = elliptic\n[run]\nthreads = 2\noutput_dir = somewhere\n");
  CHECK(c.recon.mode == ReconMode::Local);
  CHECK(c.recon.weighting == Weighting::Uniform);
  CHECK(c.recon.deriv == DerivMode::Realistic);
  CHECK(c.recon_sigma == 0.01);
  CHECK_FALSE(c.scenario.envelope);
  const std::string dump = canonical_dump(c);
  const ExperimentConfig d = parse_config_text(dump, "dump");
  CHECK(canonical_dump(d) == dump);
  CHECK(d.weights.lambda_list == c.weights.lambda_list);
  CHECK(d.scenario.seeds == c.scenario.seeds);
  CHECK(d.output_dir == "somewhere");
  CHECK(d.threads == 2);
}

TEST_CASE("misspelled key is named") {
  const std::string e = error_of("[weights]\nlamda_list = 1, 2\n");
  CHECK(e.find("lamda_list") != std::string::npos);
  CHECK(e.find("[weights]") != std::string::npos);
}

TEST_CASE("rejected values") {
  CHECK(error_of("[weights]\ns_list =\n").find("s_list") != std::string::npos);
  CHECK(error_of("[colors]\nred = 1\n").find("unknown section") != std::string::npos);
  CHECK(error_of("[scenario]\nrecipe = swirl\n").find("swirl") != std::string::npos);
  CHECK(error_of("[verify]\nestimates = elliptic, hyperbolic\n").find("hyperbolic") != std::string::npos);
  CHECK(error_of("[grid]\nn = many\n").find("many") != std::string::npos);
  CHECK(error_of("[grid]\nn = 4\n").find("n") != std::string::npos);
  CHECK(error_of("[grid]\nt0 = 2\n").find("t0") != std::string::npos);
  CHECK(error_of("[reconstruction]\nmode = sideways\n").find("sideways") != std::string::npos);
  CHECK(error_of("[weights]\nbeta_margin = 1.5\n").find("beta_margin") != std::string::npos);
}

TEST_CASE("syntax errors carry a line number") {
  const std::string e = error_of("[grid]\nn = 8\n[broken\n");
  CHECK(e.find("line 3") != std::string::npos);
}

TEST_CASE("comments and the estimate wildcard") {
  const ExperimentConfig c =
      parse_config_text("# hash comment\n; semicolon comment\n[verify]\nestimates = all\n");
  // empty means every known id
  CHECK(c.estimates.empty());
  CHECK(c.sections.count("verify") == 1);
}

TEST_CASE("required sections per command") {
  const ExperimentConfig c = parse_config_text("[grid]\nn = 8\n");
  CHECK_THROWS_AS(require_sections(c, "verify"), ConfigError);
  CHECK_NOTHROW(require_sections(c, "selftest"));
  const ExperimentConfig r = parse_config_text("[grid]\nn = 8\n[reconstruction]\ntol = 1e-9\n");
  CHECK_NOTHROW(require_sections(r, "reconstruct"));
  CHECK_THROWS_AS(require_sections(r, "stability"), ConfigError);
  CHECK_THROWS_AS(required_sections("launch"), ConfigError);
  CHECK_THROWS_AS(parse_config_file("/nonexistent/file.ini"), ConfigError);
}

}  // TEST_SUITE

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "cmhd/stability.hpp"

using namespace cmhd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("CMHD_TEST_OUT");
  const fs::path dir = (env ? fs::path(env) : fs::temp_directory_path() / "cmhd_tests") / name;
  fs::create_directories(dir);
  return dir;
}

std::size_t count_fields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("line fit") {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.0, 4.0};
  std::vector<double> y;
  for (double v : x) y.push_back(1.5 + 0.75 * v);
  const LineFit f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(f.intercept == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(f.se_slope <= 1e-12);
  CHECK(f.points == 5);

  // noisy data: the interval brackets both the estimate and the true slope
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 0.1);
  std::vector<double> xs, ys;
  for (int i = 0; i < 40; ++i) {
    xs.push_back(0.1 * i);
    ys.push_back(2.0 - 1.0 * xs.back() + N(rng));
  }
  const LineFit g = fit_line(xs, ys);
  CHECK(g.ci_low < g.slope);
  CHECK(g.slope < g.ci_high);
  CHECK(g.ci_low < -1.0);
  CHECK(g.ci_high > -1.0);
  // two-sided 95% interval from the t distribution with 38 degrees of freedom
  CHECK((g.ci_high - g.slope) / g.se_slope == doctest::Approx(2.0244).epsilon(1e-3));

  CHECK_THROWS_AS(fit_line({1.0, 2.0}, {1.0, 2.0}), PreconditionError);
  CHECK_THROWS_AS(fit_line({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), PreconditionError);
}

TEST_CASE("envelope fit recovers a planted exponent") {
  const double M = 2.0, C = 0.7;
  for (double theta : {0.3, 0.6}) {
    std::vector<double> D, e;
    for (double d = 1e-6; d < 1e-1; d *= 3.0) {
      D.push_back(d);
      e.push_back(C * (d + std::pow(M, 1.0 - theta) * std::pow(d, theta)));
    }
    const EnvelopeFit f = fit_envelope(D, e, M);
    CHECK(f.theta == doctest::Approx(theta).epsilon(1e-4));
    CHECK(f.C == doctest::Approx(C).epsilon(1e-3));
    CHECK_FALSE(f.theta_at_bound);
  }
  // errors proportional to D are matched exactly only at theta = 1
  std::vector<double> D{1e-4, 1e-3, 1e-2, 1e-1}, e;
  for (double d : D) e.push_back(0.5 * d);
  const EnvelopeFit lin = fit_envelope(D, e, 1.0);
  CHECK(lin.theta_at_bound);
  CHECK(lin.theta > 0.99);
  CHECK_THROWS_AS(fit_envelope(D, e, 0.0), PreconditionError);
}

TEST_CASE("global sweep and its table") {
  auto [g, bp] = build_grid(GridSpec{8, 8, 8, 16, 1.0}, default_gamma());
  const DistanceFunction d = build_distance_d(g, bp);
  const Scenario sc = manufacture_scenario(g, d, ScenarioRecipe{});
  const ReconContext ctx = make_context(g, bp, d, 0.5);
  StabilityParams p;
  p.seeds = {1, 2, 3};

  SUBCASE("noise-free rows carry no error") {
    p.sigmas = {0.0, 1e-3, 1e-2};
    const StabilityTable t = stability_experiment(ctx, sc, p);
    REQUIRE(t.rows.size() == 9);
    for (const auto& r : t.rows) {
      CHECK(r.converged);
      if (r.sigma == 0.0) {
        CHECK(r.D == 0.0);
        CHECK(r.err_nu == 0.0);
        CHECK(r.err_kappa == 0.0);
      } else {
        CHECK(r.D > 0.0);
        CHECK(r.rho_reg_nu > 0.0);
      }
    }
    CHECK(t.slope_total.points == 6);
  }

  SUBCASE("csv layout") {
    p.sigmas = {1e-3, 1e-2};
    const StabilityTable t = stability_experiment(ctx, sc, p);
    const fs::path path = scratch("stability") / "table.csv";
    write_stability_csv(path.string(), t, {"test table"});
    std::ifstream in(path);
    std::string line;
    int data = 0, fit = 0, header = 0;
    while (std::getline(in, line)) {
      if (line.rfind("#", 0) == 0) continue;
      const std::size_t nf = count_fields(line);
      CHECK(nf == 18);
      if (line.rfind("kind,", 0) == 0)
        ++header;
      else if (line.rfind("data,", 0) == 0)
        ++data;
      else if (line.rfind("fit,", 0) == 0)
        ++fit;
    }
    CHECK(header == 1);
    CHECK(data == 6);
    CHECK(fit == 1);
  }

  SUBCASE("bad lists are rejected") {
    p.sigmas = {};
    CHECK_THROWS_AS(stability_experiment(ctx, sc, p), PreconditionError);
    p.sigmas = {-1.0};
    CHECK_THROWS_AS(stability_experiment(ctx, sc, p), PreconditionError);
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>

#include "cmhd/mhd_systems.hpp"

using namespace cmhd;

namespace {

struct Setup {
  GridPtr g;
  BoundaryPartition bp;
  DistanceFunction d;
};

Setup setup(int n, int nt) {
  auto [g, bp] = build_grid(GridSpec{n, n, n, nt, 1.0}, default_gamma());
  return Setup{g, bp, build_distance_d(g, bp)};
}

MhdState constant_state(const GridPtr& g, std::array<double, 3> u) {
  MhdState s;
  s.g = g;
  for (int m = 0; m <= g->nt(); ++m) {
    s.u.push_back(constant_vec(g, u));
    s.H.push_back(Vec3(g, 0.0));
    s.p.push_back(Scalar(g, 0.0));
  }
  s.nu = Scalar(g, 1.0);
  s.kappa = Scalar(g, 1.0);
  return s;
}

double series_max(const VecSeries& s) {
  double m = 0.0;
  for (const auto& v : s) m = std::max(m, max_abs(v));
  return m;
}

}  // namespace

TEST_SUITE("mhd") {

TEST_CASE("trivial states have zero residual") {
  const Setup s = setup(8, 8);
  CHECK(residual_mhd(constant_state(s.g, {0, 0, 0})).max_abs() == 0.0);
  CHECK(residual_mhd(constant_state(s.g, {1, 0, 0})).max_abs() == 0.0);
}

TEST_CASE("manufactured forced states") {
  const Setup s = setup(8, 16);
  const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
  CHECK(residual_mhd(sc.s1).max_abs() <= 1e-12);
  CHECK(residual_mhd(sc.s2).max_abs() <= 1e-12);
  // positive coefficients
  for (double v : sc.s1.nu.v) CHECK(v > 0.0);
  for (double v : sc.s2.kappa.v) CHECK(v > 0.0);
  // the difference of nu vanishes on Gamma
  double on_gamma = 0.0;
  for (std::size_t p = 0; p < s.g->npts(); ++p)
    if (s.bp.gamma_mask[p]) on_gamma = std::max(on_gamma, std::abs(sc.nu_true[p]));
  CHECK(on_gamma <= 1e-12);
  CHECK(sc.assumptions.pass());
  CHECK(sc.assumptions.min_det >= 1.5);
  CHECK(sc.assumptions.min_cross >= 0.9);
}

TEST_CASE("difference pack is the difference of the states") {
  const Setup s = setup(8, 8);
  const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
  for (int m = 0; m <= s.g->nt(); ++m) {
    CHECK(max_abs(sc.pack.u[m] - (sc.s1.u[m] - sc.s2.u[m])) == 0.0);
    CHECK(max_abs(sc.pack.H[m] - (sc.s1.H[m] - sc.s2.H[m])) == 0.0);
    CHECK(max_abs(sc.pack.p[m] - (sc.s1.p[m] - sc.s2.p[m])) == 0.0);
  }
  CHECK(max_abs(sc.pack.nu - (sc.s1.nu - sc.s2.nu)) == 0.0);
}

TEST_CASE("failing recipes are rejected") {
  const Setup s = setup(8, 8);
  ScenarioRecipe r;
  r.name = "a1_fail";
  CHECK_THROWS_AS(manufacture_scenario(s.g, s.d, r), NumericalError);
  r.name = "a2_fail";
  CHECK_THROWS_AS(manufacture_scenario(s.g, s.d, r), NumericalError);
  r.name = "nope";
  CHECK_THROWS_AS(manufacture_scenario(s.g, s.d, r), PreconditionError);
}

TEST_CASE("div u1 is second order") {
  double e[2];
  for (int i = 0; i < 2; ++i) {
    const Setup s = setup(i == 0 ? 8 : 16, 8);
    const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
    e[i] = residual_mhd(sc.s1).max_div_u();
  }
  CHECK(std::log2(e[0] / e[1]) >= 1.8);
}

TEST_CASE("linearized residual") {
  const Setup s = setup(8, 8);
  const GridPtr& g = s.g;
  VecSeries zu;
  ScalarSeries zp;
  for (int m = 0; m <= g->nt(); ++m) {
    zu.push_back(Vec3(g, 0.0));
    zp.push_back(Scalar(g, 0.0));
  }
  const LinearizedCoeffs none;
  CHECK(residual_linearized(zu, zp, zu, none, {}, {}, {}).max_abs() == 0.0);

  // manufactured: sources from one evaluation make the second vanish
  LinearizedCoeffs c;
  const VecSeries u = sample_series(g, [](double x, double y, double z, double t) {
    return std::array<double, 3>{std::sin(x + t) * y, z * z - t, x * y * z};
  });
  const VecSeries H = sample_series(g, [](double x, double y, double z, double t) {
    return std::array<double, 3>{y * t, std::cos(z) + x, 0.5 * x * x};
  });
  const ScalarSeries p = sample_series(g, [](double x, double y, double z, double t) {
    return x * y + z * t;
  });
  c.nu = sample_series(g, [](double x, double, double, double) { return 1.0 + 0.1 * x; });
  c.kappa = sample_series(g, [](double, double y, double, double) { return 1.0 + 0.2 * y; });
  c.B1 = sample_series(g, [](double x, double, double, double) {
    return std::array<double, 3>{x, 0.1, 0.2};
  });
  c.D3 = sample_series(g, [](double, double, double z, double) {
    return std::array<double, 3>{0.3, z, -0.1};
  });
  const ResidualSet r0 = residual_linearized(u, p, H, c, {}, {}, {});
  const ResidualSet r1 = residual_linearized(u, p, H, c, r0.momentum, r0.induction, r0.div_u);
  CHECK(r1.max_abs() <= 1e-12);
  CHECK(r1.max_div_u() <= 1e-12);

  // linearity
  VecSeries u2 = u, H2 = H, F2 = r0.momentum, G2 = r0.induction;
  ScalarSeries p2 = p;
  for (int m = 0; m <= g->nt(); ++m) {
    u2[m] = 2.0 * u[m];
    H2[m] = 2.0 * H[m];
    p2[m] = 2.0 * p[m];
    F2[m] = Vec3(g, 0.0);
    G2[m] = Vec3(g, 0.0);
  }
  const ResidualSet r2 = residual_linearized(u2, p2, H2, c, F2, G2, {});
  for (int m = 0; m <= g->nt(); ++m) {
    CHECK(max_abs(r2.momentum[m] - 2.0 * r0.momentum[m]) <= 1e-10);
    CHECK(max_abs(r2.induction[m] - 2.0 * r0.induction[m]) <= 1e-10);
  }
}

TEST_CASE("difference residual of identical states vanishes") {
  const Setup s = setup(8, 8);
  const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
  const DifferencePack pack = make_difference_pack(sc.s1, sc.s1);
  for (int k = 0; k <= 2; ++k) CHECK(residual_difference(pack, sc.s1, sc.s1, k).max_abs() <= 1e-12);
}

TEST_CASE("order-1 difference residual tracks the time derivative of order 0") {
  double e[2];
  for (int i = 0; i < 2; ++i) {
    const int n = i == 0 ? 8 : 16;
    const Setup s = setup(n, 2 * n);
    const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
    const ResidualSet r0 = residual_difference(sc.pack, sc.s1, sc.s2, 0);
    const ResidualSet r1 = residual_difference(sc.pack, sc.s1, sc.s2, 1);
    const VecSeries dt0 = time_deriv(r0.momentum, s.g->dt());
    double m = 0.0;
    // interior time slices
    for (int q = 2; q <= s.g->nt() - 2; ++q) m = std::max(m, max_abs(r1.momentum[q] - dt0[q]));
    e[i] = m;
  }
  CHECK(std::log2(e[0] / e[1]) >= 1.5);
}

TEST_CASE("cutoff rewrite") {
  const Setup s = setup(24, 48);
  const Scenario sc = manufacture_scenario(s.g, s.d, ScenarioRecipe{});
  const Grid& g = *s.g;
  SUBCASE("chi2 = 1 reduces to the difference residual") {
    ScalarSeries one(g.nt() + 1, Scalar(s.g, 1.0));
    const CutoffRewrite cr = rewrite_with_cutoff(sc.pack, sc.s1, sc.s2, one);
    const ResidualSet rd = residual_difference(sc.pack, sc.s1, sc.s2, 0);
    CHECK(series_max(cr.commutator_u) == 0.0);
    for (int m = 0; m <= g.nt(); ++m)
      CHECK(max_abs(cr.residual.momentum[m] - rd.momentum[m]) <= 1e-12 * (1.0 + max_abs(rd.momentum[m])));
  }
  SUBCASE("commutator vanishes where the cutoff is locally one") {
    const RegularWeight w = build_regular_weight(s.d, 0.5, 1.0, 1.0, 1.0, 0.1);
    const CutoffSet cs = build_cutoffs(0.125, s.d, w);
    const CutoffRewrite cr = rewrite_with_cutoff(sc.pack, sc.s1, sc.s2, cs.chi2);
    std::size_t checked = 0;
    for (int m = 1; m < g.nt(); ++m)
      for (std::size_t p = 0; p < g.npts(); ++p) {
        const auto ijk = g.ijk(p);
        bool flat = true;
        for (int q = m - 1; q <= m + 1 && flat; ++q)
          for (int dk = -2; dk <= 2 && flat; ++dk)
            for (int dj = -2; dj <= 2 && flat; ++dj)
              for (int di = -2; di <= 2 && flat; ++di) {
                const int i = ijk[0] + di, j = ijk[1] + dj, k = ijk[2] + dk;
                if (i < 0 || j < 0 || k < 0 || i > g.n(0) || j > g.n(1) || k > g.n(2)) continue;
                flat = cs.chi2[q][g.idx(i, j, k)] == 1.0;
              }
        if (!flat) continue;
        ++checked;
        for (int a = 0; a < 3; ++a) {
          REQUIRE(std::abs(cr.commutator_u[m][a][p]) <= 1e-10);
          REQUIRE(std::abs(cr.commutator_H[m][a][p]) <= 1e-10);
        }
      }
    CHECK(checked > 0);
  }
}

}  // TEST_SUITE

#include <doctest.h>

#include <cmath>

#include "cmhd/weights.hpp"

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

}  // namespace

TEST_SUITE("weights") {

TEST_CASE("default distance d = z") {
  const Setup s = setup(8, 8);
  CHECK(s.d.d[s.g->idx(4, 4, 2)] == 0.25);
  for (std::size_t p = 0; p < s.g->npts(); ++p) {
    CHECK(s.d.grad[0][p] == 0.0);
    CHECK(s.d.grad[1][p] == 0.0);
    CHECK(s.d.grad[2][p] == doctest::Approx(1.0).epsilon(1e-12));
    if (s.g->on_face(p, ZLo)) CHECK(s.d.d[p] == 0.0);
    if (!s.g->on_boundary(p)) CHECK(s.d.d[p] > 0.0);
  }
  CHECK(s.d.sup == 1.0);
}

TEST_CASE("custom distance with an interior critical point is rejected") {
  auto [g, bp] = build_grid(GridSpec{8, 8, 8, 8, 1.0}, default_gamma());
  const ScalarFn bowl = [](double, double, double z, double) { return 4.0 * z * (1.0 - z); };
  CHECK_THROWS_AS(build_distance_d(g, bp, &bowl), PreconditionError);
}

TEST_CASE("time profile") {
  const Setup s = setup(8, 20);
  const TimeProfile l = build_time_profile(0.5, 1.0, *s.g);
  CHECK(l.eval(0.1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(l.eval(0.9) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(l.eval(0.5) == doctest::Approx(0.5));
  const int m0 = 10;
  for (int m = 0; m <= s.g->nt(); ++m) {
    if (m == m0) continue;
    CHECK(l.l[m] < l.l[m0]);
    if (m > 0 && m < s.g->nt()) CHECK(l.l[m] > 0.0);
  }
  CHECK_THROWS_AS(build_time_profile(0.0, 1.0, *s.g), PreconditionError);
}

TEST_CASE("singular weight") {
  const Setup s = setup(8, 16);
  const TimeProfile l = build_time_profile(0.5, 1.0, *s.g);
  const SingularWeight w = build_singular_weight(s.d, l, 1.0, 1.0);
  const Scalar lp = w.log_phi(0.5);
  CHECK(lp[s.g->idx(3, 3, 0)] == doctest::Approx(-std::log(0.5)));
  for (int m = 1; m < s.g->nt(); ++m) {
    const double t = s.g->t(m);
    const Scalar a = w.alpha(t);
    // equality on d = 0, and e^{d} <= e bounds the rest
    const double at_zero = (1.0 - std::exp(2.0)) / l.eval(t);
    const double bound = (std::exp(1.0) - std::exp(2.0)) / l.eval(t);
    for (std::size_t p = 0; p < a.size(); ++p) {
      REQUIRE(a[p] <= bound * (1.0 - 1e-12));
      if (s.d.d[p] == 0.0) REQUIRE(a[p] == doctest::Approx(at_zero).epsilon(1e-13));
    }
  }
  // s = 5 on the default setup: 2 s alpha at the first interior slice
  const Setup d16 = setup(16, 32);
  const TimeProfile l16 = build_time_profile(0.5, 1.0, *d16.g);
  const SingularWeight w5 = build_singular_weight(d16.d, l16, 1.0, 5.0);
  const Scalar a1 = w5.alpha(d16.g->dt());
  double mx = -1e300;
  for (double v : a1.v) mx = std::max(mx, 2.0 * 5.0 * v);
  CHECK(mx <= -1e3);
}

TEST_CASE("property: alpha(., t) <= alpha(., t0) for several lambda") {
  const Setup s = setup(8, 16);
  const TimeProfile l = build_time_profile(0.5, 1.0, *s.g);
  for (double lambda : {1.0, 2.0, 3.0}) {
    const SingularWeight w = build_singular_weight(s.d, l, lambda, 2.0);
    const Scalar a0 = w.alpha(0.5);
    for (int m = 1; m < s.g->nt(); ++m) {
      const Scalar a = w.alpha(s.g->t(m));
      for (std::size_t p = 0; p < a.size(); ++p) CHECK(a[p] <= a0[p] + 1e-12 * std::abs(a0[p]));
    }
  }
}

TEST_CASE("regular weight with zero margin") {
  const Setup s = setup(8, 16);
  const RegularWeight w = build_regular_weight(s.d, 0.5, 1.0, 1.0, 1.0, 0.0);
  CHECK(w.beta == doctest::Approx(4.0));
  CHECK(w.c0 == doctest::Approx(1.0));
  const Scalar p0 = w.psi(0.5), pe = w.psi(0.0), pT = w.psi(1.0);
  for (std::size_t p = 0; p < p0.size(); ++p) {
    CHECK(p0[p] == doctest::Approx(s.d.d[p] + w.c0));
    CHECK(pe[p] <= w.c0 + 1e-12);
    CHECK(pT[p] <= w.c0 + 1e-12);
  }
}

TEST_CASE("level sets") {
  const Setup s = setup(8, 16);
  const Mask o = omega_eps(s.d, 0.25);
  for (std::size_t p = 0; p < o.size(); ++p) CHECK(bool(o[p]) == (s.g->xyz(p)[2] > 0.25));

  const RegularWeight w = build_regular_weight(s.d, 0.5, 1.0, 1.0, 1.0, 0.0);
  const LevelSetReport r = check_level_sets(s.d, w, 0.01);
  CHECK(r.delta_eps == doctest::Approx(0.05));
  CHECK(r.backward_strip);
  CHECK(r.all());
  CHECK_THROWS_AS(check_level_sets(s.d, w, 2.0), PreconditionError);
}

TEST_CASE("cutoffs") {
  const Setup s = setup(24, 48);
  const double eps = 0.125;
  const RegularWeight w = build_regular_weight(s.d, 0.5, 1.0, 1.0, 1.0, 0.1);
  const CutoffSet c = build_cutoffs(eps, s.d, w);
  CHECK(c.chi1_of(3.5 * eps) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.eta_of(0.5) == 1.0);
  CHECK(c.eta_of(0.5 - c.delta_eps) <= 1e-30);
  CHECK(c.eta_of(0.5 + 0.5 * c.delta_eps) == 1.0);
  CHECK(c.eta_of(0.5 + 1.01 * c.delta_eps) == 0.0);
  for (std::size_t p = 0; p < s.g->npts(); ++p) {
    const double d = s.d.d[p];
    CHECK(c.chi1[p] >= 0.0);
    CHECK(c.chi1[p] <= 1.0);
    if (d > 4.0 * eps) CHECK(c.chi1[p] == 1.0);
    if (d < 3.0 * eps) CHECK(c.chi1[p] == 0.0);
  }
  const ScalarSeries psi = w.psi_series();
  for (int m = 0; m <= s.g->nt(); ++m)
    for (std::size_t p = 0; p < s.g->npts(); ++p) {
      const double v = c.chi2[m][p];
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      if (psi[m][p] > 2.0 * eps + w.c0) {
        REQUIRE(v == 1.0);
        for (int a = 0; a < 3; ++a) REQUIRE(c.grad_chi2[m][a][p] == 0.0);
      }
      if (psi[m][p] < eps + w.c0) REQUIRE(v == 0.0);
    }
}

TEST_CASE("coefficient assumptions") {
  const Setup s = setup(8, 8);
  const Vec3 u = sample(s.g, [](double x, double y, double z, double) {
    return std::array<double, 3>{y + z, x + z, x + y};
  });
  const Vec3 H = sample(s.g, [](double x, double, double, double) {
    return std::array<double, 3>{0.0, 0.0, x};
  });
  const Vec3 Hbad = sample(s.g, [](double x, double y, double, double) {
    return std::array<double, 3>{-y, x, 0.0};
  });
  const Mask all = full_mask(*s.g);
  const AssumptionReport ok = check_assumptions(u, H, s.d, all);
  CHECK(ok.pass());
  CHECK(ok.min_det == doctest::Approx(2.0));
  CHECK(ok.min_cross == doctest::Approx(1.0));
  const AssumptionReport bad = check_assumptions(u, Hbad, s.d, all);
  CHECK_FALSE(bad.pass());
  CHECK(bad.min_cross == doctest::Approx(0.0).epsilon(1e-12));
}

}  // TEST_SUITE

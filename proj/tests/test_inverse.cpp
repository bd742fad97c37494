#include <doctest.h>

#include <cmath>
#include <random>

#include "cmhd/inverse.hpp"

using namespace cmhd;

namespace {

struct World {
  GridPtr g;
  BoundaryPartition bp;
  DistanceFunction d;
};

World world(int n) {
  auto [g, bp] = build_grid(GridSpec{n, n, n, 2 * n, 1.0}, default_gamma());
  return World{g, bp, build_distance_d(g, bp)};
}

Scenario scenario(const World& w, double diff_scale = 1.0) {
  ScenarioRecipe r;
  r.diff_scale = diff_scale;
  return manufacture_scenario(w.g, w.d, r);
}

double masked_max(const Scalar& a, const Mask& m) {
  double v = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p)
    if (m[p]) v = std::max(v, std::abs(a[p]));
  return v;
}

}  // namespace

TEST_SUITE("inverse") {

TEST_CASE("operator examples") {
  const World w = world(8);
  const Scalar x = sample(w.g, [](double x, double, double, double) { return x; });
  Ten3 I(w.g, 0.0);
  for (int i = 0; i < 3; ++i) I.at(i, i) = Scalar(w.g, 1.0);
  const Vec3 pf = apply_P(x, I);
  CHECK(max_abs(pf - constant_vec(w.g, {1.0, 0.0, 0.0})) <= 1e-12);

  const Vec3 e3 = constant_vec(w.g, {0.0, 0.0, 1.0});
  CHECK(max_abs(apply_Q(x, e3) - constant_vec(w.g, {0.0, -1.0, 0.0})) <= 1e-12);

  // constant b: Q_k g = d_k (grad g x b)
  const Scalar x2 = sample(w.g, [](double x, double, double, double) { return x * x; });
  CHECK(max_abs(apply_Qk(x2, e3, 0) - constant_vec(w.g, {0.0, -2.0, 0.0})) <= 1e-10);
  CHECK(max_abs(apply_Qk(x2, e3, 1)) <= 1e-10);
  CHECK_THROWS_AS(apply_Qk(x2, e3, 3), PreconditionError);
}

TEST_CASE("property: the Q coefficient matrix is singular") {
  const World w = world(8);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-3.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec3 b = constant_vec(w.g, {U(rng), U(rng), U(rng)});
    CHECK(std::abs(det3(skew_of(b))[0]) <= 1e-12);
  }
}

TEST_CASE("identical states give zero data and a zero estimate") {
  const World w = world(8);
  const Scenario sc = scenario(w, 0.0);
  const ObservationData obs = observe(sc, 0.0, 1);
  const MeasuredRhs rhs =
      assemble_rhs_from_data(obs, background_at(sc.s1, sc.s2, obs.m0), DerivMode::Clean);
  CHECK(max_abs(rhs.F) <= 1e-12);
  CHECK(max_abs(rhs.G) <= 1e-12);

  const ReconstructionResult r = reconstruct(make_context(w.g, w.bp, w.d, 0.5), sc, obs, ReconParams{});
  CHECK(max_abs(r.nu.estimate) <= 1e-12);
  CHECK(max_abs(r.kappa.estimate) <= 1e-12);
  CHECK(r.D == 0.0);
}

TEST_CASE("assembled data approach P nu and -Q kappa under refinement") {
  double ef[2], eg[2];
  for (int i = 0; i < 2; ++i) {
    const World w = world(i == 0 ? 8 : 16);
    const Scenario sc = scenario(w);
    const ObservationData obs = observe(sc, 0.0, 1);
    const int m0 = obs.m0;
    const MeasuredRhs rhs =
        assemble_rhs_from_data(obs, background_at(sc.s1, sc.s2, m0), DerivMode::Clean);
    const Vec3 pn = apply_P(sc.nu_true, 2.0 * sym_grad(sc.s1.u[m0]));
    const Vec3 qk = apply_Q(sc.kappa_true, rot(sc.s1.H[m0]));
    ef[i] = max_abs(rhs.F - pn) / max_abs(pn);
    eg[i] = max_abs(rhs.G + qk) / max_abs(qk);
  }
  CAPTURE(ef[0]);
  CAPTURE(ef[1]);
  CAPTURE(eg[0]);
  CAPTURE(eg[1]);
  CHECK(ef[1] < ef[0]);
  CHECK(eg[1] < eg[0]);
  CHECK(ef[1] <= 0.1);
  CHECK(eg[1] <= 0.1);
}

TEST_CASE("noise model") {
  const World w = world(8);
  const Scenario sc = scenario(w);
  const ObservationData a = observe(sc, 0.0, 1), b = observe(sc, 0.0, 99);
  for (std::size_t m = 0; m < a.u.size(); ++m) CHECK(max_abs(a.u[m] - b.u[m]) == 0.0);
  const ObservationData n1 = observe(sc, 1e-2, 7), n2 = observe(sc, 1e-2, 7), n3 = observe(sc, 1e-2, 8);
  CHECK(max_abs(n1.u[3] - n2.u[3]) == 0.0);
  CHECK(max_abs(n1.u[3] - n3.u[3]) > 0.0);
  CHECK(max_abs(n1.u[3] - a.u[3]) > 0.0);
  CHECK_THROWS_AS(observe(sc, -1.0, 1), PreconditionError);
}

TEST_CASE("measurement norm and prior bound") {
  const World w = world(8);
  const Scenario s1 = scenario(w, 1.0), s2 = scenario(w, 2.0);
  const ObservationData o1 = observe(s1, 0.0, 1), o2 = observe(s2, 0.0, 1);
  for (ReconMode mode : {ReconMode::Global, ReconMode::Local}) {
    const double d1 = measurement_norm_D(o1, mode, w.d, w.bp, 0.125).value;
    const double d2 = measurement_norm_D(o2, mode, w.d, w.bp, 0.125).value;
    CHECK(d1 > 0.0);
    CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-10));
    CHECK(measurement_norm_D(observation_difference(o1, o1), mode, w.d, w.bp, 0.125).value == 0.0);
  }
  CHECK(prior_bound_M(s1.pack, s1.nu_true, s1.kappa_true, w.d, 0.125) > 0.0);
}

TEST_CASE("global reconstruction reports on the whole domain") {
  const World w = world(8);
  const Scenario sc = scenario(w);
  const ReconstructionResult r =
      reconstruct(make_context(w.g, w.bp, w.d, 0.5), sc, observe(sc, 0.0, 1), ReconParams{});
  CHECK(r.nu.stats.converged);
  CHECK(r.kappa.stats.converged);
  CHECK(r.nu.err_H1 >= 0.0);
  CHECK(r.kappa.err_H1 >= 0.0);
  CHECK(r.nu.rel_err_H1 <= 0.2);
  CHECK(r.kappa.rel_err_H1 <= 0.2);
  for (char c : r.nu.report_mask) CHECK(c != 0);
}

TEST_CASE("local reconstruction ignores data outside its region") {
  const World w = world(24);
  const Scenario sc = scenario(w);
  const ReconContext ctx = make_context(w.g, w.bp, w.d, 0.5);
  ReconParams prm;
  prm.mode = ReconMode::Local;
  prm.tol = 1e-8;
  const ObservationData obs = observe(sc, 0.0, 1);
  ObservationData junk = obs;
  const Mask keep = local_data_mask(ctx, prm.eps);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 10.0);
  for (std::size_t m = 0; m < junk.u.size(); ++m)
    for (std::size_t p = 0; p < keep.size(); ++p) {
      if (keep[p]) continue;
      for (int a = 0; a < 3; ++a) {
        junk.u[m][a][p] += N(rng);
        junk.H[m][a][p] += N(rng);
      }
      junk.p[m][p] += N(rng);
    }
  const ReconstructionResult r0 = reconstruct(ctx, sc, obs, prm);
  const ReconstructionResult r1 = reconstruct(ctx, sc, junk, prm);
  const Mask omega5 = omega_eps(w.d, 5.0 * prm.eps);
  CHECK(r0.nu.report_mask == omega5);
  CHECK(masked_max(r0.nu.estimate - r1.nu.estimate, omega5) == 0.0);
  CHECK(masked_max(r0.kappa.estimate - r1.kappa.estimate, omega5) == 0.0);
  for (std::size_t p = 0; p < omega5.size(); ++p)
    if (!omega5[p]) REQUIRE(std::isnan(r0.nu.estimate[p]));
  CHECK(r0.nu.err_H1 >= 0.0);
  CHECK(r0.kappa.err_H1 >= 0.0);
}

}  // TEST_SUITE

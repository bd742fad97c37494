#include <doctest.h>

#include <cmath>

#include "cmhd/carleman.hpp"
#include "cmhd/inverse.hpp"

using namespace cmhd;

namespace {

WeightSetup small_setup(int n = 8, int nt = 16) {
  return default_weight_setup(GridSpec{n, n, n, nt, 1.0}, 0.5, 0.1, 0.125);
}

// interior bump vanishing on the boundary
double bump(double x, double y, double z) {
  return std::sin(M_PI * x) * std::sin(M_PI * y) * std::sin(M_PI * z);
}

EllipticCase elliptic_case(const GridPtr& g, double scale) {
  EllipticCase c;
  c.y = sample(g, [scale](double x, double y, double z, double) { return scale * bump(x, y, z); });
  c.b = constant_vec(g, {0.2, 0.1, 0.1});
  c.f0 = lap(c.y) + dot(c.b, grad(c.y));
  c.fj = Vec3(g, 0.0);
  return c;
}

ParabolicCase parabolic_case(const GridPtr& g, double scale, WeightMode mode) {
  ParabolicCase c;
  c.mode = mode;
  c.y = sample_series(g, [scale](double x, double y, double z, double t) {
    return scale * std::sin(M_PI * t) * bump(x, y, z);
  });
  const ScalarSeries yt = time_deriv(c.y, g->dt());
  for (std::size_t m = 0; m < c.y.size(); ++m) c.f.push_back(yt[m] - lap(c.y[m]));
  return c;
}

}  // namespace

TEST_SUITE("carleman") {

TEST_CASE("energy norm: zero and quadratic scaling") {
  const WeightSetup ws = small_setup();
  const GridPtr& g = ws.g;
  const WeightView w = make_weight_view(ws, WeightMode::Singular, 2.0, 1.0);
  VecSeries zu;
  ScalarSeries zp;
  for (int m = 0; m <= g->nt(); ++m) {
    zu.push_back(Vec3(g, 0.0));
    zp.push_back(Scalar(g, 0.0));
  }
  CHECK(weighted_energy_norm(zu, zp, zu, w).total.is_zero());

  const VecSeries u = sample_series(g, [](double x, double y, double z, double t) {
    return std::array<double, 3>{t * y, x * z, std::sin(t + x)};
  });
  const VecSeries H = sample_series(g, [](double x, double, double z, double t) {
    return std::array<double, 3>{z, t * x, 1.0};
  });
  const ScalarSeries p = sample_series(g, [](double x, double y, double, double t) { return x * y * t; });
  VecSeries u2 = u, H2 = H;
  ScalarSeries p2 = p;
  for (int m = 0; m <= g->nt(); ++m) {
    u2[m] = 2.0 * u[m];
    H2[m] = 2.0 * H[m];
    p2[m] = 2.0 * p[m];
  }
  const EnergyNorm a = weighted_energy_norm(u, p, H, w);
  const EnergyNorm b = weighted_energy_norm(u2, p2, H2, w);
  CHECK(b.total.log() == doctest::Approx(a.total.log() + std::log(4.0)).epsilon(1e-12));
  CHECK_FALSE(a.terms.empty());
}

TEST_CASE("elliptic row against a direct quadrature") {
  const WeightSetup ws = small_setup();
  const GridPtr& g = ws.g;
  const EllipticCase c = elliptic_case(g, 1.0);
  const auto est = make_elliptic("elliptic", c);
  const double s = 2.0, lambda = 1.5;
  const CarlemanRow r = est->evaluate(ws, s, lambda);
  REQUIRE(r.status == "ok");

  // plain exponentials do not overflow at these parameters
  const std::vector<double> tw = trapezoid_weights(*g, full_mask(*g));
  const Scalar gy2 = norm2(grad(c.y));
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t p = 0; p < g->npts(); ++p) {
    const double phi = std::exp(lambda * ws.d.d[p]);
    const double w = std::exp(2.0 * s * phi);
    lhs += tw[p] * w * (gy2[p] + s * s * lambda * lambda * phi * phi * c.y[p] * c.y[p]);
    rhs += tw[p] * w * c.f0[p] * c.f0[p] / (s * lambda * lambda * phi);
  }
  CHECK(r.lhs_total.log() == doctest::Approx(std::log(lhs)).epsilon(1e-12));
  CHECK(r.rhs_interior_total.log() == doctest::Approx(std::log(rhs)).epsilon(1e-12));
  CHECK(r.log_ratio == doctest::Approx(std::log(lhs / rhs)).epsilon(1e-10));
}

TEST_CASE("elliptic degenerate, homogeneous and consistency-checked") {
  const WeightSetup ws = small_setup();
  const GridPtr& g = ws.g;
  EllipticCase zero;
  zero.y = Scalar(g, 0.0);
  zero.f0 = Scalar(g, 0.0);
  zero.fj = Vec3(g, 0.0);
  zero.b = Vec3(g, 0.0);
  CHECK(make_elliptic("e0", zero)->evaluate(ws, 2.0, 1.0).status == "degenerate");

  const auto a = make_elliptic("e1", elliptic_case(g, 1.0));
  const auto b = make_elliptic("e3", elliptic_case(g, 3.0));
  for (double s : {1.0, 4.0}) {
    const CarlemanRow ra = a->evaluate(ws, s, 2.0), rb = b->evaluate(ws, s, 2.0);
    CHECK(std::isfinite(ra.log_ratio));
    CHECK(rb.log_ratio == doctest::Approx(ra.log_ratio).epsilon(1e-12));
  }

  EllipticCase bad = elliptic_case(g, 1.0);
  bad.f0 = Scalar(g, 1.0);
  CHECK_THROWS_AS(make_elliptic("bad", bad), NumericalError);
}

TEST_CASE("parabolic rows") {
  const WeightSetup ws = small_setup();
  const GridPtr& g = ws.g;
  ParabolicCase zero;
  for (int m = 0; m <= g->nt(); ++m) {
    zero.y.push_back(Scalar(g, 0.0));
    zero.f.push_back(Scalar(g, 0.0));
  }
  CHECK(make_parabolic("p0", zero, ws)->evaluate(ws, 2.0, 1.0).status == "degenerate");

  for (WeightMode mode : {WeightMode::Singular, WeightMode::Regular}) {
    const auto a = make_parabolic("p1", parabolic_case(g, 1.0, mode), ws);
    const auto b = make_parabolic("p2", parabolic_case(g, 2.0, mode), ws);
    const CarlemanRow ra = a->evaluate(ws, 4.0, 1.0), rb = b->evaluate(ws, 4.0, 1.0);
    CHECK(ra.status == "ok");
    CHECK(rb.log_ratio == doctest::Approx(ra.log_ratio).epsilon(1e-12));
    CHECK(ra.boundary_in_ratio == (mode == WeightMode::Singular));
  }

  // regular mode needs y to vanish at both ends
  ParabolicCase open = parabolic_case(g, 1.0, WeightMode::Regular);
  open.y.front() = Scalar(g, 1.0);
  CHECK_THROWS_AS(make_parabolic("open", open, ws), PreconditionError);
}

TEST_CASE("mhd row of the zero triple is degenerate") {
  const WeightSetup ws = small_setup();
  const GridPtr& g = ws.g;
  MhdCase c;
  for (int m = 0; m <= g->nt(); ++m) {
    c.u.push_back(Vec3(g, 0.0));
    c.H.push_back(Vec3(g, 0.0));
    c.F.push_back(Vec3(g, 0.0));
    c.G.push_back(Vec3(g, 0.0));
    c.p.push_back(Scalar(g, 0.0));
  }
  const auto est = make_mhd("m0", c, LinearizedCoeffs{}, ws);
  CHECK(est->evaluate(ws, 2.0, 1.0).status == "degenerate");

  // inconsistent sources are rejected
  c.F[3] = constant_vec(g, {1.0, 0.0, 0.0});
  CHECK_THROWS_AS(make_mhd("m1", c, LinearizedCoeffs{}, ws), NumericalError);
}

TEST_CASE("Q example: constant b and g = x") {
  const WeightSetup ws = small_setup();
  const Scalar gx = sample(ws.g, [](double x, double, double, double) { return x; });
  const Vec3 q = apply_Q(gx, constant_vec(ws.g, {0.0, 0.0, 1.0}));
  for (std::size_t p = 0; p < ws.g->npts(); ++p) {
    CHECK(q[0][p] == doctest::Approx(0.0));
    CHECK(q[1][p] == doctest::Approx(-1.0));
    CHECK(q[2][p] == doctest::Approx(0.0));
  }
}

TEST_CASE("first-order assumption failure is reported") {
  const WeightSetup ws = small_setup();
  FirstOrderCase c;
  c.kind = FirstOrderKind::Q;
  c.f = sample(ws.g, [](double x, double y, double z, double) { return bump(x, y, z); });
  // b parallel to grad d
  c.b = constant_vec(ws.g, {0.0, 0.0, 1.0});
  c.region = Box::full(*ws.g);
  CHECK_THROWS_AS(make_first_order("q", c, ws), NumericalError);
}

TEST_CASE("sweep shape, order and determinism") {
  const WeightSetup ws = small_setup();
  const auto est = default_estimate("first_order_P", ws);
  SweepParams p;
  p.s_list = {4.0, 2.0, 8.0};
  p.lambda_list = {2.0, 1.0};
  const CarlemanReport r = sweep(*est, ws, p);
  REQUIRE(r.rows.size() == 6);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    CHECK((a.lambda < b.lambda || (a.lambda == b.lambda && a.s < b.s)));
  }
  CHECK(r.summary.per_lambda.size() == 2);

  p.threads = 2;
  const CarlemanReport r2 = sweep(*est, ws, p);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(r2.rows[i].log_ratio == r.rows[i].log_ratio);
    CHECK(r2.rows[i].lhs_total.log() == r.rows[i].lhs_total.log());
  }

  p.s_list.clear();
  CHECK_THROWS_AS(sweep(*est, ws, p), PreconditionError);
}

TEST_CASE("every known estimate evaluates on a small grid") {
  const WeightSetup ws = small_setup();
  for (const std::string& id : known_estimates()) {
    CAPTURE(id);
    const auto est = default_estimate(id, ws);
    const CarlemanRow r = est->evaluate(ws, 2.0, 1.0);
    CHECK(r.estimate_id == id);
    CHECK(std::isfinite(r.log_ratio));
  }
  CHECK_THROWS_AS(default_estimate("nope", ws), PreconditionError);
}

}  // TEST_SUITE

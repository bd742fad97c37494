#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cmhd/grid.hpp"

using namespace cmhd;

namespace {

constexpr double kPi = std::numbers::pi;

GridPtr cube(int n, int nt = 8) { return build_grid(GridSpec{n, n, n, nt, 1.0}, default_gamma()).first; }

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("default partition on 8^3") {
  auto [g, bp] = build_grid(GridSpec{8, 8, 8, 8, 1.0}, default_gamma());
  CHECK(g->npts() == 729u);
  int faces = 0;
  for (bool f : bp.gamma) faces += f ? 1 : 0;
  CHECK(faces == 5);
  CHECK_FALSE(bp.gamma[ZLo]);
  for (std::size_t p = 0; p < g->npts(); ++p) {
    const int covered = (bp.gamma_mask[p] ? 1 : 0) + (bp.rest_mask[p] ? 1 : 0);
    CHECK(covered == (g->on_boundary(p) ? 1 : 0));
  }
}

TEST_CASE("grid preconditions") {
  CHECK_THROWS_AS(build_grid(GridSpec{8, 8, 8, 8, 1.0}, std::array<bool, 6>{}), PreconditionError);
  CHECK_THROWS_AS(build_grid(GridSpec{7, 8, 8, 8, 1.0}, default_gamma()), PreconditionError);
  CHECK_THROWS_AS(build_grid(GridSpec{8, 8, 8, 4, 1.0}, default_gamma()), PreconditionError);
  CHECK(cube(16)->h(0) == 0.0625);
}

TEST_CASE("sampling") {
  const GridPtr g = cube(8);
  const Scalar z = sample(g, [](double, double, double z, double) { return z; });
  CHECK(z[g->idx(3, 5, 2)] == 0.25);
  const Scalar zero = sample(g, [](double, double, double, double) { return 0.0; });
  CHECK(max_abs(zero) == 0.0);
  double prev = 0.0;
  for (int n : {9, 17, 33}) {
    const GridPtr h = build_grid(GridSpec{n, n, n, 8, 1.0}, default_gamma()).first;
    const Scalar s = sample(h, [](double x, double, double, double) { return std::sin(kPi * x); });
    const double m = max_abs(s);
    CHECK(m <= 1.0);
    CHECK(m >= prev);
    prev = m;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("rot grad of x^2 y vanishes") {
  const GridPtr g = cube(8);
  const Scalar f = sample(g, [](double x, double y, double, double) { return x * x * y; });
  CHECK(max_abs(rot(grad(f))) <= 1e-12);
}

TEST_CASE("property: rot grad and div rot vanish on random quadratics") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  const GridPtr g = cube(8);
  for (int trial = 0; trial < 6; ++trial) {
    std::array<double, 10> c;
    for (auto& v : c) v = U(rng);
    auto quad = [c](double x, double y, double z) {
      return c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * x + c[5] * y * y + c[6] * z * z +
             c[7] * x * y + c[8] * y * z + c[9] * x * z;
    };
    const Scalar f = sample(g, [&](double x, double y, double z, double) { return quad(x, y, z); });
    const Vec3 v = sample(g, [&](double x, double y, double z, double) {
      return std::array<double, 3>{quad(y, z, x), quad(z, x, y), quad(x, z, y)};
    });
    CHECK(max_abs(rot(grad(f))) <= 1e-12);
    CHECK(max_abs(div(rot(v))) <= 1e-12);
  }
}

TEST_CASE("sym_grad and div of u = (y+z, x+z, x+y)") {
  const GridPtr g = cube(8);
  const Vec3 u = sample(g, [](double x, double y, double z, double) {
    return std::array<double, 3>{y + z, x + z, x + y};
  });
  const Ten3 E = sym_grad(u);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double want = i == j ? 0.0 : 1.0;
      double dev = 0.0;
      for (double v : E.at(i, j).v) dev = std::max(dev, std::abs(v - want));
      CHECK(dev <= 1e-12);
    }
  CHECK(max_abs(div(u)) <= 1e-12);
}

TEST_CASE("laplacian of sin(pi x): interior error ratio near 4 per halving") {
  auto err = [](int n) {
    const GridPtr g = cube(n);
    const Scalar f = sample(g, [](double x, double, double, double) { return std::sin(kPi * x); });
    const Scalar l = lap(f);
    double e = 0.0;
    for (std::size_t p = 0; p < g->npts(); ++p)
      if (!g->on_boundary(p)) e = std::max(e, std::abs(l[p] + kPi * kPi * std::sin(kPi * g->xyz(p)[0])));
    return e;
  };
  const double ratio = err(16) / err(32);
  CHECK(ratio > 3.2);
  CHECK(ratio < 4.8);
}

TEST_CASE("tensor algebra") {
  const GridPtr g = cube(8);
  const Vec3 e1 = constant_vec(g, {1, 0, 0}), e3 = constant_vec(g, {0, 0, 1});
  const Vec3 c = cross(e1, e3);
  CHECK(c[0][0] == 0.0);
  CHECK(c[1][0] == -1.0);
  CHECK(c[2][0] == 0.0);

  Ten3 M(g, 1.0);
  for (int i = 0; i < 3; ++i) M.at(i, i) = Scalar(g, 0.0);
  CHECK(det3(M)[0] == doctest::Approx(2.0));

  // skew matrices: the permuted triple products cancel without rounding
  const Vec3 b0 = sample(g, [](double x, double y, double z, double) {
    return std::array<double, 3>{std::sin(3 * x + y), std::cos(2 * y - z) - 0.3, x * z + 0.7};
  });
  CHECK(max_abs(det3(skew_of(b0))) == 0.0);

  const Vec3 a = sample(g, [](double x, double y, double z, double) {
    return std::array<double, 3>{x, y * z, 1.0 + z};
  });
  const Vec3 b = sample(g, [](double x, double y, double, double) {
    return std::array<double, 3>{y, 2.0, x - y};
  });
  const Ten3 ab = transpose(outer(a, b)), ba = outer(b, a);
  for (int k = 0; k < 9; ++k) CHECK(max_abs(ab.c[k] - ba.c[k]) == 0.0);
}

TEST_CASE("weighted integrals") {
  const GridPtr g = cube(16);
  const Mask all = full_mask(*g);
  CHECK(integrate_weighted(Scalar(g, 0.0), all).is_zero());
  CHECK(integrate_weighted(Scalar(g, 1.0), all).value() == doctest::Approx(1.0).epsilon(1e-12));

  auto z2 = [](int n) {
    const GridPtr h = cube(n);
    const Scalar z = sample(h, [](double, double, double z, double) { return z * z; });
    return std::abs(integrate_weighted(z, full_mask(*h)).value() - 1.0 / 3.0);
  };
  CHECK(z2(16) <= 1e-3);
  CHECK(z2(16) / z2(32) == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("property: integrate_weighted is scale-covariant and monotone in the weight") {
  const GridPtr g = cube(8);
  const Mask all = full_mask(*g);
  const Scalar dens = sample(g, [](double x, double y, double z, double) { return 1.0 + x * y + z; });
  const Scalar logw = sample(g, [](double x, double, double z, double) { return 3.0 * x - z; });
  const LogValue a = integrate_weighted(dens, logw, all);
  for (double c : {-50.0, 0.5, 700.0}) {
    Scalar shifted = logw;
    for (double& v : shifted.v) v += c;
    const LogValue b = integrate_weighted(dens, shifted, all);
    CHECK(b.normalized == a.normalized);
    CHECK(b.log_scale == doctest::Approx(a.log_scale + c).epsilon(1e-14));
  }
  Scalar bigger = logw;
  for (std::size_t p = 0; p < bigger.size(); p += 3) bigger[p] += 0.7;
  CHECK(integrate_weighted(dens, bigger, all).log() > a.log());
}

TEST_CASE("sobolev norms") {
  const GridPtr g8 = cube(8);
  const Mask all8 = full_mask(*g8);
  CHECK(sobolev_norm(Scalar(g8, 0.0), 1, all8) == 0.0);
  CHECK(sobolev_norm(Scalar(g8, 1.0), 0, all8) == doctest::Approx(1.0).epsilon(1e-12));
  const GridPtr g = cube(24);
  const Scalar s = sample(g, [](double, double, double z, double) { return std::sin(kPi * z); });
  const double want = 0.5 + kPi * kPi / 2.0;
  CHECK(sobolev_sq(s, 1, full_mask(*g)) == doctest::Approx(want).epsilon(0.01));
}

TEST_CASE("log values add across scales") {
  const LogValue a{0.5, 10.0}, b{0.25, 12.0};
  const LogValue c = a + b;
  CHECK(c.log() == doctest::Approx(std::log(0.5 * std::exp(10.0) + 0.25 * std::exp(12.0))));
  CHECK((a + LogValue{}).log() == doctest::Approx(a.log()));
}

}  // TEST_SUITE

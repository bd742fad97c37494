#include <cmath>
#include <numbers>
#include <sstream>

#include "cmhd/mhd_systems.hpp"

namespace cmhd {

namespace {

constexpr double kPi = std::numbers::pi;

using V3 = std::array<double, 3>;

struct Trig {
  double sx, sy, sz, cx, cy, cz;
  Trig(double x, double y, double z)
      : sx(std::sin(kPi * x)), sy(std::sin(kPi * y)), sz(std::sin(kPi * z)),
        cx(std::cos(kPi * x)), cy(std::cos(kPi * y)), cz(std::cos(kPi * z)) {}
};

// rot of (0, 0, S/pi), S = sin(pi x) sin(pi y) sin(pi z)
V3 swirl_z(double x, double y, double z) {
  Trig q(x, y, z);
  return {q.sx * q.cy * q.sz, -q.cx * q.sy * q.sz, 0.0};
}
// rot of (S/pi, 0, 0)
V3 swirl_x(double x, double y, double z) {
  Trig q(x, y, z);
  return {0.0, q.sx * q.sy * q.cz, -q.sx * q.cy * q.sz};
}
// rot of (0, S/pi, 0)
V3 swirl_y(double x, double y, double z) {
  Trig q(x, y, z);
  return {-q.sx * q.sy * q.cz, 0.0, q.cx * q.sy * q.sz};
}

struct Closed {
  VecFn u1, H1;
  ScalarFn p1;
  ScalarFn nu1, kappa1;
  VecFn du, dH;  // difference fields u1 - u2, H1 - H2
  ScalarFn dp;
  ScalarFn dnu, dkappa;  // nu1 - nu2, kappa1 - kappa2
};

Closed closed_forms(const ScenarioRecipe& r, double T) {
  Closed c;
  auto tau = [T](double t) { return 1.0 + 0.5 * std::sin(2.0 * kPi * t / T); };
  const bool env_on = r.envelope;
  auto env = [T, env_on](double t) {
    return env_on ? std::sin(kPi * t / T) : 1.0 + 0.25 * t / T;
  };
  const double a = r.diff_scale;

  if (r.name == "a1_fail") {
    c.u1 = [](double x, double y, double, double) { return V3{y, x, 0.0}; };
  } else {
    c.u1 = [tau](double x, double y, double z, double t) {
      V3 s = swirl_z(x, y, z);
      double k = 0.1 * tau(t);
      return V3{y + z + k * s[0], x + z + k * s[1], x + y + k * s[2]};
    };
  }
  if (r.name == "a2_fail") {
    c.H1 = [](double x, double y, double, double) { return V3{-y, x, 0.0}; };
  } else {
    c.H1 = [tau](double x, double y, double z, double t) {
      V3 s = swirl_x(x, y, z);
      double k = 0.02 * tau(t);
      return V3{k * s[0], k * s[1], x + k * s[2]};
    };
  }
  c.p1 = [tau](double x, double y, double z, double t) {
    Trig q(x, y, z);
    return 0.3 * tau(t) * q.cx * q.cy * q.cz;
  };
  c.nu1 = [](double x, double y, double z, double) { return 1.0 + 0.2 * x * y * z; };
  c.kappa1 = [](double x, double, double, double) { return 1.0 + 0.1 * x; };

  c.du = [a, env](double x, double y, double z, double t) {
    V3 s = swirl_y(x, y, z);
    double k = 0.3 * a * env(t);
    return V3{k * s[0], k * s[1], k * s[2]};
  };
  c.dH = [a, env](double x, double y, double z, double t) {
    V3 s = swirl_z(x, y, z);
    double k = 0.2 * a * env(t);
    return V3{k * s[0], k * s[1], k * s[2]};
  };
  c.dp = [a, env](double x, double y, double z, double t) {
    Trig q(x, y, z);
    return 0.4 * a * env(t) * q.cx * q.cy * q.cz;
  };
  // vanishes on every face but z = 0
  c.dnu = [a](double x, double y, double z, double) {
    return -0.1 * a * std::sin(kPi * x) * std::sin(kPi * y) * std::cos(0.5 * kPi * z);
  };
  // vanishes with its gradient on the whole boundary
  c.dkappa = [a](double x, double y, double z, double) {
    double s = std::sin(kPi * x) * std::sin(kPi * y) * std::sin(kPi * z);
    return -0.5 * a * s * s;
  };
  return c;
}

VecFn minus(VecFn f, VecFn g) {
  return [f, g](double x, double y, double z, double t) {
    V3 a = f(x, y, z, t), b = g(x, y, z, t);
    return V3{a[0] - b[0], a[1] - b[1], a[2] - b[2]};
  };
}
ScalarFn minus(ScalarFn f, ScalarFn g) {
  return [f, g](double x, double y, double z, double t) { return f(x, y, z, t) - g(x, y, z, t); };
}

MhdState build_state(const GridPtr& g, const VecFn& u, const VecFn& H, const ScalarFn& p,
                     const ScalarFn& nu, const ScalarFn& kappa) {
  MhdState s;
  s.g = g;
  s.u = sample_series(g, u);
  s.H = sample_series(g, H);
  s.p = sample_series(g, p);
  s.nu = sample(g, nu);
  s.kappa = sample(g, kappa);
  attach_forcings(s);
  return s;
}

}  // namespace

Vec3 recipe_u1(const GridPtr& g, const ScenarioRecipe& r, double t) {
  return sample(g, closed_forms(r, g->T()).u1, t);
}
Vec3 recipe_H1(const GridPtr& g, const ScenarioRecipe& r, double t) {
  return sample(g, closed_forms(r, g->T()).H1, t);
}

std::vector<std::string> known_recipes() { return {"default", "a1_fail", "a2_fail"}; }

Scenario manufacture_scenario(const GridPtr& g, const DistanceFunction& d,
                              const ScenarioRecipe& recipe) {
  bool known = false;
  for (const auto& n : known_recipes()) known = known || n == recipe.name;
  if (!known) throw PreconditionError("manufacture_scenario: unknown recipe '" + recipe.name + "'");
  if (!(recipe.t0 > 0.0 && recipe.t0 < g->T()))
    throw PreconditionError("manufacture_scenario: need 0 < t0 < T");
  const int m0 = static_cast<int>(std::lround(recipe.t0 / g->dt()));
  if (std::abs(m0 * g->dt() - recipe.t0) > 1e-12)
    throw PreconditionError("manufacture_scenario: t0 must lie on the time grid");

  const Closed c = closed_forms(recipe, g->T());
  Scenario sc;
  sc.recipe = recipe;
  Vec3 u1_t0 = sample(g, c.u1, recipe.t0);
  Vec3 H1_t0 = sample(g, c.H1, recipe.t0);
  sc.assumptions = check_assumptions(u1_t0, H1_t0, d, full_mask(*g));
  if (!sc.assumptions.pass()) {
    std::ostringstream os;
    os << "manufacture_scenario: recipe '" << recipe.name
       << "' fails the coefficient assumptions (min |det E(u1)| = " << sc.assumptions.min_det
       << ", min |grad d x rot H1| = " << sc.assumptions.min_cross << ")";
    throw NumericalError(os.str());
  }
  sc.s1 = build_state(g, c.u1, c.H1, c.p1, c.nu1, c.kappa1);
  sc.s2 = build_state(g, minus(c.u1, c.du), minus(c.H1, c.dH), minus(c.p1, c.dp),
                      minus(c.nu1, c.dnu), minus(c.kappa1, c.dkappa));
  sc.pack = make_difference_pack(sc.s1, sc.s2);
  sc.nu_true = sample(g, c.dnu);
  sc.kappa_true = sample(g, c.dkappa);
  return sc;
}

}  // namespace cmhd

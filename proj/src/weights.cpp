#include "cmhd/weights.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace cmhd {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_default_gamma(const BoundaryPartition& bp) { return bp.gamma == default_gamma(); }

// Cubic Hermite on [a, b].
double hermite(double t, double a, double b, double pa, double pb, double ma, double mb) {
  double h = b - a, u = (t - a) / h;
  double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u;
  double h01 = -2 * u * u * u + 3 * u * u, h11 = u * u * u - u * u;
  return h00 * pa + h10 * h * ma + h01 * pb + h11 * h * mb;
}
double hermite_d(double t, double a, double b, double pa, double pb, double ma, double mb) {
  double h = b - a, u = (t - a) / h;
  double d00 = 6 * u * u - 6 * u, d10 = 3 * u * u - 4 * u + 1;
  double d01 = -6 * u * u + 6 * u, d11 = 3 * u * u - 2 * u;
  return (d00 * pa + d01 * pb) / h + d10 * ma + d11 * mb;
}
}  // namespace

DistanceFunction build_distance_d(const GridPtr& g, const BoundaryPartition& bp,
                                  const ScalarFn* custom) {
  DistanceFunction df;
  if (!custom) {
    if (!is_default_gamma(bp))
      throw PreconditionError("distance: the closed-form d = z needs Gamma = all faces but z=0");
    df.d = sample(g, [](double, double, double z, double) { return z; });
    df.grad = constant_vec(g, {0.0, 0.0, 1.0});
  } else {
    df.d = sample(g, *custom);
    df.grad = grad(df.d);
  }
  df.sup = max_abs(df.d);
  for (std::size_t p = 0; p < g->npts(); ++p) {
    auto x = g->xyz(p);
    std::ostringstream where;
    where << " at (" << x[0] << ", " << x[1] << ", " << x[2] << ")";
    if (!g->on_boundary(p) && !(df.d[p] > 0.0))
      throw PreconditionError("distance: d must be positive inside" + where.str());
    double gn = std::sqrt(df.grad[0][p] * df.grad[0][p] + df.grad[1][p] * df.grad[1][p] +
                          df.grad[2][p] * df.grad[2][p]);
    if (!(gn > 1e-8)) throw PreconditionError("distance: |grad d| vanishes" + where.str());
    if (bp.rest_mask[p] && std::abs(df.d[p]) > 1e-12)
      throw PreconditionError("distance: d must vanish off Gamma" + where.str());
  }
  return df;
}

double TimeProfile::eval(double t) const {
  const double a = 0.5 * delta, b = T - 0.5 * delta;
  if (t <= a) return t;
  if (t >= b) return T - t;
  if (t <= t0) return hermite(t, a, t0, a, peak, 1.0, 0.0);
  return hermite(t, t0, b, peak, T - b, 0.0, -1.0);
}

double TimeProfile::deriv(double t) const {
  const double a = 0.5 * delta, b = T - 0.5 * delta;
  if (t <= a) return 1.0;
  if (t >= b) return -1.0;
  if (t <= t0) return hermite_d(t, a, t0, a, peak, 1.0, 0.0);
  return hermite_d(t, t0, b, peak, T - b, 0.0, -1.0);
}

TimeProfile build_time_profile(double t0, double T, const Grid& g, std::optional<double> peak) {
  if (!(t0 > 0.0 && t0 < T)) throw PreconditionError("time profile: need 0 < t0 < T");
  TimeProfile p;
  p.t0 = t0;
  p.T = T;
  p.delta = std::min(t0, T - t0);
  p.peak = peak.value_or(t0);
  if (!(p.peak > 0.5 * p.delta))
    throw PreconditionError("time profile: peak value must exceed delta/2");
  p.l.resize(g.nt() + 1);
  p.dl.resize(g.nt() + 1);
  for (int m = 0; m <= g.nt(); ++m) {
    p.l[m] = p.eval(g.t(m));
    p.dl[m] = p.deriv(g.t(m));
  }
  for (int m = 1; m < g.nt(); ++m)
    if (!(p.l[m] > 0.0)) throw NumericalError("time profile: l must be positive inside (0,T)");
  // strict maximum at t0 over the grid and over a fine sample
  const int fine = 20 * g.nt();
  for (int q = 0; q <= fine; ++q) {
    double t = T * q / fine;
    if (std::abs(t - t0) < 1e-12) continue;
    if (!(p.eval(t) < p.peak)) {
      std::ostringstream os;
      os << "time profile: l(t0) is not a strict maximum (l(" << t << ") = " << p.eval(t)
         << "); choose a different peak value";
      throw NumericalError(os.str());
    }
  }
  return p;
}

// ---------------------------------------------------------------- singular weight

Scalar SingularWeight::alpha(double t) const {
  double l = prof.eval(t);
  Scalar a(g);
  const double top = std::exp(2.0 * lambda * dsup);
  for (std::size_t p = 0; p < a.size(); ++p)
    a[p] = l > 0.0 ? (std::exp(ld[p]) - top) / l : kNegInf;
  return a;
}

Scalar SingularWeight::log_phi(double t) const {
  double l = prof.eval(t);
  Scalar a(g);
  for (std::size_t p = 0; p < a.size(); ++p)
    a[p] = l > 0.0 ? ld[p] - std::log(l) : std::numeric_limits<double>::infinity();
  return a;
}

Scalar SingularWeight::log_weight_at(double t) const {
  Scalar a = alpha(t);
  for (auto& x : a.v) x = std::isfinite(x) ? 2.0 * s * x : kNegInf;
  return a;
}

ScalarSeries SingularWeight::log_phi_series() const {
  ScalarSeries out;
  for (int m = 0; m <= g->nt(); ++m) out.push_back(log_phi(g->t(m)));
  return out;
}

SingularWeight build_singular_weight(const DistanceFunction& d, const TimeProfile& l,
                                     double lambda, double s) {
  if (!(lambda >= 1.0) || !(s >= 1.0))
    throw PreconditionError("singular weight: need lambda >= 1 and s >= 1");
  SingularWeight w;
  w.lambda = lambda;
  w.s = s;
  w.g = d.d.g;
  w.ld = lambda * d.d;
  w.dsup = d.sup;
  w.prof = l;
  for (int m = 0; m <= w.g->nt(); ++m) w.log_weight.push_back(w.log_weight_at(w.g->t(m)));
  // alpha < 0 and maximal at t0 for every x
  Scalar at0 = w.alpha(l.t0);
  for (int m = 0; m <= w.g->nt(); ++m) {
    Scalar a = w.alpha(w.g->t(m));
    for (std::size_t p = 0; p < a.size(); ++p) {
      if (!(a[p] < 0.0)) throw NumericalError("singular weight: alpha must be negative");
      if (a[p] > at0[p] * (1.0 - 1e-14))
        if (std::abs(w.g->t(m) - l.t0) > 1e-12)
          throw NumericalError("singular weight: alpha(x, .) not maximal at t0");
    }
  }
  return w;
}

// ---------------------------------------------------------------- regular weight

Scalar RegularWeight::psi(double t) const {
  Scalar out(g);
  const double shift = -beta * (t - t0) * (t - t0) + c0;
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = d[p] + shift;
  return out;
}

Scalar RegularWeight::log_phi(double t) const { return lambda * psi(t); }

Scalar RegularWeight::log_weight_at(double t) const {
  Scalar out = psi(t);
  for (auto& x : out.v) x = 2.0 * s * std::exp(lambda * x);
  return out;
}

ScalarSeries RegularWeight::psi_series() const {
  ScalarSeries out;
  for (int m = 0; m <= g->nt(); ++m) out.push_back(psi(g->t(m)));
  return out;
}

ScalarSeries RegularWeight::log_phi_series() const {
  ScalarSeries out;
  for (int m = 0; m <= g->nt(); ++m) out.push_back(log_phi(g->t(m)));
  return out;
}

RegularWeight build_regular_weight(const DistanceFunction& d, double t0, double T,
                                   double lambda, double s, double beta_margin) {
  if (!(lambda >= 1.0) || !(s >= 1.0))
    throw PreconditionError("regular weight: need lambda >= 1 and s >= 1");
  if (!(beta_margin >= 0.0)) throw PreconditionError("regular weight: beta margin must be >= 0");
  if (!(t0 > 0.0 && t0 < T)) throw PreconditionError("regular weight: need 0 < t0 < T");
  RegularWeight w;
  w.lambda = lambda;
  w.s = s;
  w.t0 = t0;
  w.T = T;
  w.margin = beta_margin;
  w.g = d.d.g;
  w.d = d.d;
  const double delta = std::min(t0, T - t0);
  w.beta = (1.0 + beta_margin) * d.sup / (delta * delta);
  w.c0 = std::max(w.beta * t0 * t0, w.beta * (T - t0) * (T - t0));
  for (int m = 0; m <= w.g->nt(); ++m) w.log_weight.push_back(w.log_weight_at(w.g->t(m)));
  for (int m = 0; m <= w.g->nt(); ++m) {
    Scalar ps = w.psi(w.g->t(m));
    for (std::size_t p = 0; p < ps.size(); ++p)
      if (ps[p] < -1e-12) throw NumericalError("regular weight: psi must be nonnegative");
  }
  for (double te : {0.0, T}) {
    Scalar ps = w.psi(te);
    for (std::size_t p = 0; p < ps.size(); ++p)
      if (ps[p] > w.c0 + 1e-12) throw NumericalError("regular weight: psi exceeds c0 at t in {0,T}");
  }
  return w;
}

// ---------------------------------------------------------------- level sets

Mask omega_eps(const DistanceFunction& d, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("level set: eps must be > 0");
  Mask m(d.d.size(), 0);
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = d.d[p] > eps ? 1 : 0;
  return m;
}

std::vector<Mask> q_eps(const RegularWeight& w, double eps) {
  if (!(eps > 0.0)) throw PreconditionError("level set: eps must be > 0");
  std::vector<Mask> out;
  for (int m = 0; m <= w.g->nt(); ++m) {
    Scalar ps = w.psi(w.g->t(m));
    Mask mk(ps.size(), 0);
    for (std::size_t p = 0; p < mk.size(); ++p) mk[p] = ps[p] > eps + w.c0 ? 1 : 0;
    out.push_back(std::move(mk));
  }
  return out;
}

LevelSetReport check_level_sets(const DistanceFunction& d, const RegularWeight& w, double eps) {
  const Mask o5 = omega_eps(d, 5.0 * eps);
  bool any5 = false;
  for (std::size_t p = 0; p < o5.size(); ++p)
    any5 = any5 || (o5[p] && !w.g->on_boundary(p));
  if (!any5) throw PreconditionError("level set: Omega_{5 eps} has no interior grid point");

  LevelSetReport r;
  r.eps = eps;
  r.delta_eps = std::sqrt(eps / w.beta);
  const Grid& g = *w.g;
  const Mask oe = omega_eps(d, eps), o3 = omega_eps(d, 3.0 * eps);

  // fine time sampling in addition to the grid
  std::vector<double> times;
  const int fine = 8 * g.nt();
  for (int q = 0; q <= fine; ++q) times.push_back(w.T * q / fine);
  times.push_back(w.t0);

  r.inside_slab = true;
  r.away_from_ends = true;
  for (double t : times) {
    Scalar ps = w.psi(t);
    for (std::size_t p = 0; p < ps.size(); ++p) {
      bool in_q = ps[p] > eps + w.c0;
      if (in_q && (!oe[p] || t <= 0.0 || t >= w.T)) r.inside_slab = false;
    }
  }
  for (double t : {0.0, w.T}) {
    Scalar ps = w.psi(t);
    for (double x : ps.v)
      if (!(x < eps + w.c0)) r.away_from_ends = false;
  }
  {
    Scalar ps = w.psi(w.t0);
    r.contains_t0_slice = true;
    for (std::size_t p = 0; p < ps.size(); ++p)
      if (oe[p] && !(ps[p] > eps + w.c0)) r.contains_t0_slice = false;
  }
  r.backward_strip = true;
  for (int q = 1; q < 64; ++q) {
    double t = w.t0 - r.delta_eps + r.delta_eps * q / 64.0;
    Scalar ps = w.psi(t);
    for (std::size_t p = 0; p < ps.size(); ++p)
      if (o3[p] && !(ps[p] > 2.0 * eps + w.c0)) r.backward_strip = false;
  }
  return r;
}

// ---------------------------------------------------------------- cutoffs

double smoothstep5(double r) {
  if (r <= 0.0) return 0.0;
  if (r >= 1.0) return 1.0;
  return r * r * r * (10.0 + r * (-15.0 + 6.0 * r));
}
double smoothstep5_d1(double r) {
  if (r <= 0.0 || r >= 1.0) return 0.0;
  return 30.0 * r * r * (1.0 - r) * (1.0 - r);
}
double smoothstep5_d2(double r) {
  if (r <= 0.0 || r >= 1.0) return 0.0;
  return 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r);
}

double CutoffSet::chi1_of(double dval) const { return smoothstep5((dval - 3.0 * eps) / eps); }

double CutoffSet::eta_of(double t) const {
  double a = std::abs(t - t0);
  return smoothstep5((delta_eps - a) / (0.5 * delta_eps));
}

CutoffSet build_cutoffs(double eps, const DistanceFunction& d, const RegularWeight& w) {
  const Grid& g = *w.g;
  check_level_sets(d, w, eps);  // throws when Omega_5eps is empty
  double gmax = 0.0;
  for (std::size_t p = 0; p < g.npts(); ++p)
    gmax = std::max(gmax, std::sqrt(d.grad[0][p] * d.grad[0][p] + d.grad[1][p] * d.grad[1][p] +
                                    d.grad[2][p] * d.grad[2][p]));
  double hmax = std::max({g.h(0), g.h(1), g.h(2)});
  if (eps / gmax < 3.0 * hmax) {
    std::ostringstream os;
    os << "cutoffs: spatial transition band " << eps / gmax << " thinner than 3h = " << 3 * hmax;
    throw PreconditionError(os.str());
  }
  CutoffSet c;
  c.eps = eps;
  c.t0 = w.t0;
  c.c0 = w.c0;
  c.delta_eps = std::sqrt(eps / w.beta);
  if (0.5 * c.delta_eps < 3.0 * g.dt()) {
    std::ostringstream os;
    os << "cutoffs: temporal transition band " << 0.5 * c.delta_eps << " thinner than 3 dt = "
       << 3 * g.dt();
    throw PreconditionError(os.str());
  }

  c.chi1 = Scalar(w.g);
  Scalar dchi1(w.g);
  for (std::size_t p = 0; p < g.npts(); ++p) {
    double r = (d.d[p] - 3.0 * eps) / eps;
    c.chi1[p] = smoothstep5(r);
    dchi1[p] = smoothstep5_d1(r) / eps;
  }
  c.grad_chi1 = dchi1 * d.grad;

  const Ten3 hess_d = [&] {
    Ten3 Hd;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) Hd.at(i, j) = deriv(d.grad[i], j);
    return Hd;
  }();
  for (int m = 0; m <= g.nt(); ++m) {
    const double t = g.t(m);
    Scalar ps = w.psi(t);
    Scalar ch(w.g), s1(w.g), s2(w.g);
    for (std::size_t p = 0; p < g.npts(); ++p) {
      double r = (ps[p] - eps - w.c0) / eps;
      ch[p] = smoothstep5(r);
      s1[p] = smoothstep5_d1(r) / eps;
      s2[p] = smoothstep5_d2(r) / (eps * eps);
    }
    c.chi2.push_back(ch);
    c.grad_chi2.push_back(s1 * d.grad);
    c.dt_chi2.push_back((-2.0 * w.beta * (t - w.t0)) * s1);
    Ten3 Hc;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        Hc.at(i, j) = s2 * (d.grad[i] * d.grad[j]) + s1 * hess_d.at(i, j);
    c.hess_chi2.push_back(std::move(Hc));
    c.eta.push_back(c.eta_of(t));
    double a = std::abs(t - w.t0);
    double r = (c.delta_eps - a) / (0.5 * c.delta_eps);
    double sgn = (t > w.t0) ? 1.0 : (t < w.t0 ? -1.0 : 0.0);
    c.deta.push_back(-sgn * smoothstep5_d1(r) / (0.5 * c.delta_eps));
  }
  return c;
}

// ---------------------------------------------------------------- assumptions

AssumptionReport check_assumptions(const Vec3& u1_t0, const Vec3& H1_t0,
                                   const DistanceFunction& d, const Mask& region,
                                   double threshold) {
  AssumptionReport r;
  r.threshold = threshold;
  Scalar det = det3(sym_grad(u1_t0));
  Vec3 c = cross(d.grad, rot(H1_t0));
  Scalar cn = norm2(c);
  r.min_det = std::numeric_limits<double>::infinity();
  r.min_cross = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t p = 0; p < det.size(); ++p) {
    if (!region[p]) continue;
    any = true;
    r.min_det = std::min(r.min_det, std::abs(det[p]));
    r.min_cross = std::min(r.min_cross, std::sqrt(cn[p]));
  }
  if (!any) throw PreconditionError("assumption check: empty region");
  return r;
}

}  // namespace cmhd

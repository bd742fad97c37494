#include "cmhd/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "cmhd/fields_io.hpp"
#include "cmhd/parallel.hpp"

namespace cmhd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

double log_ratio(const LogValue& a, const LogValue& b) {
  if (a.is_zero() && b.is_zero()) return std::numeric_limits<double>::quiet_NaN();
  if (b.is_zero()) return std::numeric_limits<double>::infinity();
  if (a.is_zero()) return kNegInf;
  return a.log() - b.log();
}

LogValue sum_terms(const std::vector<Term>& ts) {
  LogValue s;
  for (const auto& t : ts) s = s + t.value;
  return s;
}

/// base + phi_pow * log_phi + c + extra_coef * extra, with -inf kept where base is -inf.
ScalarSeries log_coef(const WeightView& w, double phi_pow, double c,
                      const Scalar* extra = nullptr, double extra_coef = 0.0) {
  ScalarSeries out;
  out.reserve(w.log_weight.size());
  for (std::size_t m = 0; m < w.log_weight.size(); ++m) {
    Scalar s = w.log_weight[m];
    for (std::size_t p = 0; p < s.size(); ++p) {
      if (!std::isfinite(s[p])) {
        s[p] = kNegInf;
        continue;
      }
      double v = s[p] + c;
      if (phi_pow != 0.0) v += phi_pow * w.log_phi[m][p];
      if (extra) v += extra_coef * (*extra)[p];
      s[p] = v;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> time_weights(int nt, double dt) {
  std::vector<double> w(nt + 1, dt);
  w[0] = w[nt] = 0.5 * dt;
  return w;
}

/// Per-slice spatial integrals of density * exp(logw) over the full domain.
std::vector<LogValue> slice_integrals(const ScalarSeries& dens, const ScalarSeries& logw,
                                      const Mask& mask) {
  std::vector<LogValue> out;
  for (std::size_t m = 0; m < dens.size(); ++m)
    out.push_back(integrate_weighted(dens[m], logw[m], mask));
  return out;
}

LogValue time_sum(const std::vector<LogValue>& slices, double dt) {
  const auto tw = time_weights(static_cast<int>(slices.size()) - 1, dt);
  LogValue t;
  for (std::size_t m = 0; m < slices.size(); ++m) t = t + scaled(slices[m], std::log(tw[m]));
  return t;
}

/// Space-time integral; optionally accumulates the slices 1 and nt-1.
LogValue st_integral(const ScalarSeries& dens, const ScalarSeries& logw, const Mask& mask,
                     double dt, LogValue* endpoint = nullptr) {
  const auto sl = slice_integrals(dens, logw, mask);
  if (endpoint) {
    const int nt = static_cast<int>(sl.size()) - 1;
    *endpoint = *endpoint + scaled(sl[1], std::log(dt)) + scaled(sl[nt - 1], std::log(dt));
  }
  return time_sum(sl, dt);
}

double fraction(const LogValue& part, const LogValue& whole) {
  if (whole.is_zero()) return 0.0;
  if (part.is_zero()) return 0.0;
  return std::exp(part.log() - whole.log());
}

Scalar hess_sq(const Scalar& f) {
  Ten3 Hs = hessian(f);
  return norm2(Hs);
}
Scalar hess_sq(const Vec3& v) { return hess_sq(v[0]) + hess_sq(v[1]) + hess_sq(v[2]); }

Scalar jac_sq(const Vec3& v) { return norm2(jacobian(v)); }

ScalarSeries zeros_like(const ScalarSeries& s) {
  ScalarSeries z;
  for (const auto& x : s) z.push_back(Scalar(x.g, 0.0));
  return z;
}

std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](char c) { return c != 0; }));
}

void finish_row(CarlemanRow& r) {
  r.lhs_total = sum_terms(r.lhs);
  r.rhs_interior_total = sum_terms(r.rhs_interior);
  r.rhs_boundary_total = sum_terms(r.rhs_boundary);
  LogValue rhs = r.boundary_in_ratio ? r.rhs_interior_total + r.rhs_boundary_total
                                     : r.rhs_interior_total;
  r.log_ratio = log_ratio(r.lhs_total, rhs);
  r.log_ratio_interior = log_ratio(r.lhs_total, r.rhs_interior_total);
  if (std::isnan(r.log_ratio))
    r.status = "degenerate";
  else if (!std::isfinite(r.log_ratio))
    r.status = r.log_ratio > 0 ? "failed: right side vanishes" : "failed: left side vanishes";
}

/// Sum over the boundary faces of the closed domain per slice, unweighted.
LogValue sigma_integral(const ScalarSeries& dens, double dt) {
  const Grid& g = *dens[0].g;
  ScalarSeries zero = zeros_like(dens);
  std::array<bool, 6> all{true, true, true, true, true, true};
  return integrate_surface(dens, zero, Box::full(g), all, dt);
}

/// Time integral of the H^{1/2} trace surrogate over the whole boundary.
double pressure_half_norm_sq(const ScalarSeries& p, double dt) {
  const auto tw = time_weights(static_cast<int>(p.size()) - 1, dt);
  const std::array<bool, 6> all{true, true, true, true, true, true};
  double total = 0.0;
  for (std::size_t m = 0; m < p.size(); ++m) total += tw[m] * trace_half_norm_sq(p[m], all);
  return total;
}

}  // namespace

double CarlemanRow::ratio() const { return std::exp(log_ratio); }
double CarlemanRow::ratio_interior() const { return std::exp(log_ratio_interior); }

WeightView make_weight_view(const WeightSetup& ws, WeightMode mode, double s, double lambda) {
  WeightView v;
  v.mode = mode;
  v.s = s;
  v.lambda = lambda;
  if (mode == WeightMode::Singular) {
    TimeProfile prof = build_time_profile(ws.t0, ws.g->T(), *ws.g);
    SingularWeight w = build_singular_weight(ws.d, prof, lambda, s);
    v.log_weight = w.log_weight;
    for (int m = 0; m <= ws.g->nt(); ++m) {
      if (prof.l[m] > 0.0) {
        v.log_phi.push_back(w.log_phi(ws.g->t(m)));
      } else {
        v.log_phi.push_back(Scalar(ws.g, 0.0));
        for (auto& x : v.log_weight[m].v) x = kNegInf;
      }
    }
  } else {
    RegularWeight w = build_regular_weight(ws.d, ws.t0, ws.g->T(), lambda, s, ws.beta_margin);
    v.log_weight = w.log_weight;
    v.log_phi = w.log_phi_series();
  }
  return v;
}

EnergyDensities energy_densities(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                 double dt) {
  EnergyDensities e;
  const VecSeries ut = time_deriv(u, dt), Ht = time_deriv(H, dt);
  for (std::size_t m = 0; m < u.size(); ++m) {
    e.dt_u.push_back(norm2(ut[m]));
    e.d2_u.push_back(hess_sq(u[m]));
    e.grad_u.push_back(jac_sq(u[m]));
    e.u.push_back(norm2(u[m]));
    e.grad_p.push_back(norm2(grad(p[m])));
    e.p.push_back(p[m] * p[m]);
    e.dt_H.push_back(norm2(Ht[m]));
    e.d2_H.push_back(hess_sq(H[m]));
    e.grad_H.push_back(jac_sq(H[m]));
    e.H.push_back(norm2(H[m]));
  }
  return e;
}

namespace {
std::vector<Term> energy_terms_impl(const EnergyDensities& e, const WeightView& w,
                                    LogValue* endpoint) {
  const double ls = std::log(w.s);
  const Grid& g = *e.u[0].g;
  const Mask full = full_mask(g);
  const double dt = g.dt();
  struct Spec {
    const char* name;
    const ScalarSeries* dens;
    double pow;  // power of s phi
  };
  const bool sing = w.mode == WeightMode::Singular;
  const std::vector<Spec> spec = {
      {"dt_u", &e.dt_u, sing ? -2.0 : -1.0},  {"d2_u", &e.d2_u, sing ? -2.0 : -1.0},
      {"grad_u", &e.grad_u, sing ? 0.0 : 1.0}, {"u", &e.u, sing ? 2.0 : 3.0},
      {"grad_p", &e.grad_p, sing ? -1.0 : 0.0}, {"p", &e.p, sing ? 1.0 : 2.0},
      {"dt_H", &e.dt_H, sing ? -2.0 : -1.0},  {"d2_H", &e.d2_H, sing ? -2.0 : -1.0},
      {"grad_H", &e.grad_H, sing ? 0.0 : 1.0}, {"H", &e.H, sing ? 2.0 : 3.0}};
  std::vector<Term> out;
  for (const auto& sp : spec)
    out.push_back(
        {sp.name, st_integral(*sp.dens, log_coef(w, sp.pow, sp.pow * ls), full, dt, endpoint)});
  return out;
}
}  // namespace

std::vector<Term> energy_terms(const EnergyDensities& e, const WeightView& w) {
  return energy_terms_impl(e, w, nullptr);
}

EnergyNorm weighted_energy_norm(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                const WeightView& w) {
  if (u.empty() || p.size() != u.size() || H.size() != u.size())
    throw PreconditionError("weighted_energy_norm: triple series lengths differ");
  if (w.log_weight.size() != u.size())
    throw PreconditionError("weighted_energy_norm: weight does not match the time grid");
  EnergyNorm n;
  n.terms = energy_terms(energy_densities(u, p, H, u[0].grid()->dt()), w);
  n.total = sum_terms(n.terms);
  return n;
}

// ---------------------------------------------------------------- elliptic

namespace {

class EllipticEstimate final : public Estimate {
 public:
  EllipticEstimate(std::string id, const EllipticCase& c) : id_(std::move(id)) {
    const Grid& g = *c.y.g;
    for (std::size_t p = 0; p < g.npts(); ++p)
      if (g.on_boundary(p) && std::abs(c.y[p]) > 1e-10)
        throw PreconditionError("elliptic estimate: y must vanish on the boundary");
    Scalar lhs_eq = lap(c.y) + dot(c.b, grad(c.y));
    Scalar rhs_eq = c.f0 + div(c.fj);
    double mis = max_abs(lhs_eq - rhs_eq);
    double scale = 1.0 + max_abs(lhs_eq);
    if (mis > 1e-8 * scale) {
      std::ostringstream os;
      os << "elliptic estimate: sources inconsistent with y (max mismatch " << mis << ")";
      throw NumericalError(os.str());
    }
    grad_sq_ = norm2(grad(c.y));
    y_sq_ = c.y * c.y;
    f0_sq_ = c.f0 * c.f0;
    fj_sq_ = norm2(c.fj);
  }
  std::string id() const override { return id_; }
  CarlemanRow evaluate(const WeightSetup& ws, double s, double lambda) const override {
    const Grid& g = *ws.g;
    const Mask full = full_mask(g);
    Scalar ld = lambda * ws.d.d;
    Scalar base(ws.g);
    for (std::size_t p = 0; p < g.npts(); ++p) base[p] = 2.0 * s * std::exp(ld[p]);
    auto with = [&](double c, double ld_coef) {
      Scalar w = base;
      for (std::size_t p = 0; p < g.npts(); ++p) w[p] += c + ld_coef * ld[p];
      return w;
    };
    const double ls = std::log(s), ll = std::log(lambda);
    CarlemanRow r;
    r.estimate_id = id_;
    r.s = s;
    r.lambda = lambda;
    r.n = g.n(0);
    r.lhs.push_back({"grad_y", integrate_weighted(grad_sq_, base, full)});
    r.lhs.push_back({"y", integrate_weighted(y_sq_, with(2 * ls + 2 * ll, 2.0), full)});
    r.rhs_interior.push_back({"f0", integrate_weighted(f0_sq_, with(-ls - 2 * ll, -1.0), full)});
    r.rhs_interior.push_back({"fj", integrate_weighted(fj_sq_, with(ls, 1.0), full)});
    r.region_points = g.npts();
    finish_row(r);
    return r;
  }

 private:
  std::string id_;
  Scalar grad_sq_, y_sq_, f0_sq_, fj_sq_;
};

// ---------------------------------------------------------------- parabolic

class ParabolicEstimate final : public Estimate {
 public:
  ParabolicEstimate(std::string id, const ParabolicCase& c, const WeightSetup& ws)
      : id_(std::move(id)), mode_(c.mode) {
    const Grid& g = *ws.g;
    if (static_cast<int>(c.y.size()) != g.nt() + 1 || c.f.size() != c.y.size())
      throw PreconditionError("parabolic estimate: series do not match the time grid");
    if (mode_ == WeightMode::Regular) {
      if (max_abs(c.y.front()) > 1e-12 || max_abs(c.y.back()) > 1e-12)
        throw PreconditionError("parabolic estimate: regular mode needs y = 0 at t = 0 and t = T");
    }
    const ScalarSeries yt = time_deriv(c.y, g.dt());
    for (std::size_t m = 0; m < c.y.size(); ++m) {
      Scalar gs = norm2(grad(c.y[m]));
      d2_.push_back(yt[m] * yt[m] + hess_sq(c.y[m]));
      grad_.push_back(gs);
      y_.push_back(c.y[m] * c.y[m]);
      f_.push_back(c.f[m] * c.f[m]);
      bdy_.push_back(y_.back() + gs + yt[m] * yt[m]);
    }
    boundary_ = sigma_integral(bdy_, g.dt());
  }
  std::string id() const override { return id_; }
  CarlemanRow evaluate(const WeightSetup& ws, double s, double lambda) const override {
    const Grid& g = *ws.g;
    const Mask full = full_mask(g);
    const WeightView w = make_weight_view(ws, mode_, s, lambda);
    const double ls = std::log(s), ll = std::log(lambda);
    CarlemanRow r;
    r.estimate_id = id_;
    r.s = s;
    r.lambda = lambda;
    r.n = g.n(0);
    LogValue ep;
    if (mode_ == WeightMode::Singular) {
      // e^{lambda d} enters every term
      const Scalar& d = ws.d.d;
      r.lhs.push_back({"dt_y_d2_y", st_integral(d2_, log_coef(w, -2, -2 * ls, &d, lambda), full, g.dt(), &ep)});
      r.lhs.push_back({"grad_y", st_integral(grad_, log_coef(w, 0, 2 * ll, &d, lambda), full, g.dt(), &ep)});
      r.lhs.push_back({"y", st_integral(y_, log_coef(w, 2, 2 * ls + 4 * ll, &d, lambda), full, g.dt(), &ep)});
      r.rhs_interior.push_back({"f", st_integral(f_, log_coef(w, -1, -ls, &d, lambda), full, g.dt())});
      r.rhs_boundary.push_back({"sigma_y", scaled(boundary_, -s)});
      r.boundary_in_ratio = true;
      set_endpoint(r, ep, w, full, g);
    } else {
      r.lhs.push_back({"dt_y_d2_y", st_integral(d2_, log_coef(w, -1, -ls), full, g.dt())});
      r.lhs.push_back({"grad_y", st_integral(grad_, log_coef(w, 1, ls + 2 * ll), full, g.dt())});
      r.lhs.push_back({"y", st_integral(y_, log_coef(w, 3, 3 * ls + 4 * ll), full, g.dt())});
      r.rhs_interior.push_back({"f", st_integral(f_, log_coef(w, 0, 0), full, g.dt())});
      // the e^{C(lambda) s} factor is unknown: reported unscaled, kept out of the ratio
      r.rhs_boundary.push_back({"sigma_y", boundary_});
      r.boundary_in_ratio = false;
    }
    r.region_points = g.npts();
    finish_row(r);
    return r;
  }

  static void set_endpoint(CarlemanRow& r, const LogValue& ep, const WeightView& w,
                           const Mask& full, const Grid& g) {
    r.endpoint_fraction = fraction(ep, sum_terms(r.lhs));
    ScalarSeries ones;
    for (int m = 0; m <= g.nt(); ++m) ones.push_back(Scalar(w.log_weight[m].g, 1.0));
    LogValue ew;
    LogValue tot = st_integral(ones, w.log_weight, full, g.dt(), &ew);
    r.endpoint_weight_fraction = fraction(ew, tot);
  }

 private:
  std::string id_;
  WeightMode mode_;
  ScalarSeries d2_, grad_, y_, f_, bdy_;
  LogValue boundary_;
};

// ---------------------------------------------------------------- MHD

class MhdEstimate final : public Estimate {
 public:
  MhdEstimate(std::string id, const MhdCase& c, const LinearizedCoeffs& coeffs,
              const WeightSetup& ws, double tol)
      : id_(std::move(id)), mode_(c.mode) {
    const Grid& g = *ws.g;
    if (mode_ == WeightMode::Regular) {
      double e = std::max({max_abs(c.u.front()), max_abs(c.u.back()), max_abs(c.H.front()),
                           max_abs(c.H.back())});
      if (e > 1e-12)
        throw PreconditionError("mhd estimate: regular mode needs u = H = 0 at t = 0 and t = T");
    }
    ScalarSeries h = c.h;
    if (mode_ == WeightMode::Singular) h.clear();
    ResidualSet res = residual_linearized(c.u, c.p, c.H, coeffs, c.F, c.G, h);
    double scale = 1.0;
    for (const auto& v : c.F) scale = std::max(scale, max_abs(v));
    for (const auto& v : c.G) scale = std::max(scale, max_abs(v));
    double worst = 0.0;
    int wm = 0;
    std::size_t wp = 0;
    for (int m = 0; m <= g.nt(); ++m)
      for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < g.npts(); ++p) {
          double v = std::max({std::abs(res.momentum[m][k][p]), std::abs(res.induction[m][k][p]),
                               std::abs(res.div_u[m][p])});
          if (v > worst) {
            worst = v;
            wm = m;
            wp = p;
          }
        }
    if (worst > tol * scale) {
      auto x = g.xyz(wp);
      std::ostringstream os;
      os << "mhd estimate: triple and sources inconsistent, residual " << worst << " at (" << x[0]
         << ", " << x[1] << ", " << x[2] << ", t=" << g.t(wm) << ")";
      throw NumericalError(os.str());
    }
    dens_ = energy_densities(c.u, c.p, c.H, g.dt());
    for (int m = 0; m <= g.nt(); ++m) {
      F_.push_back(norm2(c.F[m]));
      G_.push_back(norm2(c.G[m]));
    }
    if (mode_ == WeightMode::Regular) {
      ScalarSeries hh = c.h.empty() ? zeros_like(c.p) : c.h;
      ScalarSeries ht = time_deriv(hh, g.dt());
      for (int m = 0; m <= g.nt(); ++m) gh_.push_back(norm2(grad(hh[m])) + ht[m] * ht[m]);
    }
    // boundary traces on Sigma
    const VecSeries ut = time_deriv(c.u, g.dt()), Ht = time_deriv(c.H, g.dt());
    ScalarSeries bu, bgu, bH, bgH;
    for (int m = 0; m <= g.nt(); ++m) {
      bu.push_back(norm2(c.u[m]));
      bgu.push_back(jac_sq(c.u[m]) + norm2(ut[m]));
      bH.push_back(norm2(c.H[m]));
      bgH.push_back(jac_sq(c.H[m]) + norm2(Ht[m]));
    }
    bdy_ = {{"sigma_u", sigma_integral(bu, g.dt())},
            {"sigma_grad_u", sigma_integral(bgu, g.dt())},
            {"sigma_H", sigma_integral(bH, g.dt())},
            {"sigma_grad_H", sigma_integral(bgH, g.dt())},
            {"sigma_p_half", LogValue{pressure_half_norm_sq(c.p, g.dt()), 0.0}}};
  }
  std::string id() const override { return id_; }
  CarlemanRow evaluate(const WeightSetup& ws, double s, double lambda) const override {
    const Grid& g = *ws.g;
    const Mask full = full_mask(g);
    const WeightView w = make_weight_view(ws, mode_, s, lambda);
    const double ls = std::log(s);
    CarlemanRow r;
    r.estimate_id = id_;
    r.s = s;
    r.lambda = lambda;
    r.n = g.n(0);
    LogValue ep;
    r.lhs = energy_terms_impl(dens_, w, &ep);
    if (mode_ == WeightMode::Singular) {
      r.rhs_interior.push_back({"F", st_integral(F_, log_coef(w, 0, 0), full, g.dt())});
      r.rhs_interior.push_back({"G", st_integral(G_, log_coef(w, 0, 0), full, g.dt())});
      for (const auto& t : bdy_) r.rhs_boundary.push_back({t.name, scaled(t.value, -s)});
      r.boundary_in_ratio = true;
      ParabolicEstimate::set_endpoint(r, ep, w, full, g);
    } else {
      r.rhs_interior.push_back({"F", st_integral(F_, log_coef(w, 1, ls), full, g.dt())});
      r.rhs_interior.push_back({"G", st_integral(G_, log_coef(w, 1, ls), full, g.dt())});
      r.rhs_interior.push_back({"grad_xt_h", st_integral(gh_, log_coef(w, 1, ls), full, g.dt())});
      r.rhs_boundary = bdy_;
      r.boundary_in_ratio = false;
    }
    r.region_points = g.npts();
    finish_row(r);
    return r;
  }

 private:
  std::string id_;
  WeightMode mode_;
  EnergyDensities dens_;
  ScalarSeries F_, G_, gh_;
  std::vector<Term> bdy_;
};

// ---------------------------------------------------------------- first order

class FirstOrderEstimate final : public Estimate {
 public:
  FirstOrderEstimate(std::string id, const FirstOrderCase& c, const WeightSetup& ws,
                     double threshold)
      : id_(std::move(id)), c_(c) {
    const Grid& g = *ws.g;
    region_ = box_mask(g, c.region);
    // assumption on the closure of the region
    double worst = std::numeric_limits<double>::infinity();
    if (c.kind == FirstOrderKind::P) {
      Scalar det = det3(c.A);
      for (std::size_t p = 0; p < g.npts(); ++p)
        if (region_[p]) worst = std::min(worst, std::abs(det[p]));
    } else {
      Scalar cr = norm2(cross(ws.d.grad, c.b));
      for (std::size_t p = 0; p < g.npts(); ++p)
        if (region_[p]) worst = std::min(worst, std::sqrt(cr[p]));
    }
    if (!(worst > threshold)) {
      std::ostringstream os;
      os << "first-order estimate " << id_ << ": coefficient assumption fails on the region (min "
         << worst << ")";
      throw NumericalError(os.str());
    }
    Vec3 gf = grad(c.f);
    grad_ = norm2(gf);
    f_ = c.f * c.f;
    if (c.kind == FirstOrderKind::P) {
      Vec3 Pf = matvec(c.A, gf) + c.f * div(c.A);
      op_ = norm2(Pf);
    } else {
      Vec3 Qg = cross(gf, c.b) + c.f * rot(c.b);
      op_ = norm2(Qg);
      grad_op_ = jac_sq(Qg);
    }
    for (int f = 0; f < 6; ++f) {
      if (!c.boundary_faces[f]) continue;
      // points on the chosen faces of the region box
      for (std::size_t p = 0; p < g.npts(); ++p) {
        auto ix = g.ijk(p);
        int a = face_axis(f);
        int fixed = face_is_hi(f) ? c.region.hi[a] : c.region.lo[a];
        if (ix[a] == fixed && c.region.contains(ix[0], ix[1], ix[2])) ++bpoints_;
      }
    }
  }
  std::string id() const override { return id_; }
  CarlemanRow evaluate(const WeightSetup& ws, double s, double lambda) const override {
    const Grid& g = *ws.g;
    const double ls = std::log(s), ll = std::log(lambda);
    // log weight and log phi at the chosen time
    Scalar lw(ws.g), lphi(ws.g), lphi0(ws.g);
    double l_t0 = 1.0, c0 = 0.0;
    if (c_.weight == FirstOrderWeight::T0Singular)
      l_t0 = build_time_profile(ws.t0, g.T(), g).eval(ws.t0);
    if (c_.weight == FirstOrderWeight::T0Regular)
      c0 = build_regular_weight(ws.d, ws.t0, g.T(), lambda, s, ws.beta_margin).c0;
    const double top = std::exp(2.0 * lambda * ws.d.sup);
    for (std::size_t p = 0; p < g.npts(); ++p) {
      const double ld = lambda * ws.d.d[p];
      lphi0[p] = ld;
      switch (c_.weight) {
        case FirstOrderWeight::Volume:
          lw[p] = 2.0 * s * std::exp(ld);
          lphi[p] = ld;
          break;
        case FirstOrderWeight::T0Singular:
          lw[p] = 2.0 * s * (std::exp(ld) - top) / l_t0;
          lphi[p] = ld - std::log(l_t0);
          break;
        case FirstOrderWeight::T0Regular:
          lw[p] = 2.0 * s * std::exp(ld + lambda * c0);
          lphi[p] = ld + lambda * c0;
          break;
      }
    }
    auto with = [&](double c, double phi_pow, const Scalar& lp) {
      Scalar w = lw;
      for (std::size_t p = 0; p < g.npts(); ++p) w[p] += c + phi_pow * lp[p];
      return w;
    };
    CarlemanRow r;
    r.estimate_id = id_;
    r.s = s;
    r.lambda = lambda;
    r.n = g.n(0);
    r.lhs.push_back({"grad_f", integrate_weighted(grad_, lw, region_)});
    r.lhs.push_back({"f", integrate_weighted(f_, with(2 * ls + 2 * ll, 2.0, lphi), region_)});
    if (c_.kind == FirstOrderKind::P) {
      r.rhs_interior.push_back({"Pf", integrate_weighted(op_, lw, region_)});
      // the regular t0 display keeps phi_0 in the boundary factor
      const Scalar& lpb = c_.weight == FirstOrderWeight::T0Regular ? lphi0 : lphi;
      r.rhs_boundary.push_back(
          {"bdy_f", integrate_surface(f_, with(ls + ll, 1.0, lpb), c_.region, c_.boundary_faces)});
    } else {
      r.rhs_interior.push_back({"grad_Qg", integrate_weighted(grad_op_, with(-2 * ls - 2 * ll, -2.0, lphi), region_)});
      r.rhs_interior.push_back({"Qg", integrate_weighted(op_, lw, region_)});
      r.rhs_boundary.push_back(
          {"bdy_grad_g", integrate_surface(grad_, with(-ls - ll, -1.0, lphi), c_.region, c_.boundary_faces)});
      r.rhs_boundary.push_back(
          {"bdy_g", integrate_surface(f_, with(ls + ll, 1.0, lphi), c_.region, c_.boundary_faces)});
    }
    r.boundary_in_ratio = true;
    r.region_points = count(region_);
    r.boundary_points = bpoints_;
    finish_row(r);
    return r;
  }

 private:
  std::string id_;
  FirstOrderCase c_;
  Mask region_;
  Scalar grad_, f_, op_, grad_op_;
  std::size_t bpoints_ = 0;
};

// ---------------------------------------------------------------- default scenarios

double bump(double r) { return r < 1.0 ? std::pow(1.0 - r * r, 4) : 0.0; }

ScalarFn space_time_bump(double t0, double amp, double phase) {
  return [t0, amp, phase](double x, double y, double z, double t) {
    // radius 0.25 keeps composed boundary stencils (reach 4h at n = 16) outside the support
    double r = std::sqrt((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5) + (z - 0.5) * (z - 0.5)) / 0.25;
    double rt = (t - t0) / 0.35;
    return amp * bump(r) * bump(std::abs(rt)) * (1.0 + 0.3 * std::sin(kPi * (x + phase)));
  };
}

LinearizedCoeffs default_coeffs(const GridPtr& g) {
  LinearizedCoeffs c;
  c.nu = sample_series(g, ScalarFn([](double x, double, double, double) { return 1.0 + 0.1 * x; }));
  c.kappa = sample_series(g, ScalarFn([](double, double y, double, double) { return 1.0 + 0.1 * y; }));
  auto vec = [&](VecFn f) { return sample_series(g, f); };
  c.B1 = vec([](double x, double y, double z, double) { return std::array<double, 3>{y + z, x + z, x + y}; });
  c.B2 = vec([](double x, double, double, double t) { return std::array<double, 3>{0.1 * x * t, 0.0, 0.0}; });
  c.C1 = vec([](double x, double, double, double) { return std::array<double, 3>{0.0, 0.0, -x}; });
  c.C2 = vec([](double, double y, double, double) { return std::array<double, 3>{0.0, 0.1 * y, 0.0}; });
  c.C4 = vec([](double x, double, double, double) { return std::array<double, 3>{0.0, 0.0, -x}; });
  c.D1 = vec([](double x, double y, double z, double) { return std::array<double, 3>{y + z, x + z, x + y}; });
  c.D3 = vec([](double, double, double z, double) { return std::array<double, 3>{0.0, 0.0, 0.1 * z}; });
  return c;
}

std::unique_ptr<Estimate> default_mhd(const std::string& id, const WeightSetup& ws, WeightMode mode) {
  const GridPtr& g = ws.g;
  // discrete rot of sampled potentials: div u = div H = 0 to round-off
  ScalarSeries psi1 = sample_series(g, space_time_bump(ws.t0, 1.0, 0.0));
  ScalarSeries psi2 = sample_series(g, space_time_bump(ws.t0, 0.5, 0.25));
  ScalarSeries pp = sample_series(g, space_time_bump(ws.t0, 0.8, 0.5));
  MhdCase c;
  c.mode = mode;
  for (int m = 0; m <= g->nt(); ++m) {
    Vec3 a(g), b(g);
    a[2] = psi1[m];
    b[0] = psi2[m];
    b[1] = 0.5 * psi1[m];
    c.u.push_back(rot(a));
    c.H.push_back(rot(b));
  }
  c.p = pp;
  LinearizedCoeffs co = default_coeffs(g);
  VecSeries zero;
  ResidualSet lhs = residual_linearized(c.u, c.p, c.H, co, zero, zero, ScalarSeries{});
  c.F = lhs.momentum;
  c.G = lhs.induction;
  for (int m = 0; m <= g->nt(); ++m) c.h.push_back(div(c.u[m]));
  return make_mhd(id, c, co, ws);
}

std::unique_ptr<Estimate> default_parabolic(const std::string& id, const WeightSetup& ws,
                                            WeightMode mode) {
  const GridPtr& g = ws.g;
  ParabolicCase c;
  c.mode = mode;
  c.y = sample_series(g, space_time_bump(ws.t0, 1.0, 0.0));
  const ScalarSeries yt = time_deriv(c.y, g->dt());
  Scalar nu = sample(g, ScalarFn([](double x, double, double, double) { return 1.0 + 0.1 * x; }));
  Vec3 b = sample(g, VecFn([](double, double y, double, double) { return std::array<double, 3>{0.2, 0.1 * y, 0.1}; }));
  for (int m = 0; m <= g->nt(); ++m) {
    Scalar f = yt[m] - nu * lap(c.y[m]);
    f += dot(b, grad(c.y[m]));
    f += 0.5 * c.y[m];
    c.f.push_back(std::move(f));
  }
  return make_parabolic(id, c, ws);
}

int first_index_at_least(const Grid& g, int axis, double v) {
  for (int i = 0; i <= g.n(axis); ++i)
    if (g.coord(axis, i) >= v - 1e-12) return i;
  return g.n(axis);
}

std::unique_ptr<Estimate> default_first_order(const std::string& id, const WeightSetup& ws,
                                              FirstOrderKind kind, FirstOrderWeight weight,
                                              bool subdomain) {
  const GridPtr& g = ws.g;
  FirstOrderCase c;
  c.kind = kind;
  c.weight = weight;
  ScenarioRecipe rec;
  rec.t0 = ws.t0;
  // vanishes linearly on every face but z = 0
  c.f = sample(g, ScalarFn([](double x, double y, double z, double) {
    return std::sin(kPi * x) * std::sin(kPi * y) * std::cos(0.5 * kPi * z);
  }));
  if (kind == FirstOrderKind::P)
    c.A = 2.0 * sym_grad(recipe_u1(g, rec, ws.t0));
  else
    c.b = rot(recipe_H1(g, rec, ws.t0));
  if (subdomain) {
    c.region = Box::full(*g);
    c.region.lo[2] = first_index_at_least(*g, 2, 3.0 * ws.eps);
    c.boundary_faces = {true, true, true, true, true, true};
  } else {
    c.region = Box::full(*g);
    if (kind == FirstOrderKind::P)
      c.boundary_faces = ws.bp.gamma;
    else
      c.boundary_faces = {true, true, true, true, true, true};
  }
  return make_first_order(id, c, ws);
}

}  // namespace

std::unique_ptr<Estimate> make_elliptic(const std::string& id, const EllipticCase& c) {
  return std::make_unique<EllipticEstimate>(id, c);
}
std::unique_ptr<Estimate> make_parabolic(const std::string& id, const ParabolicCase& c,
                                         const WeightSetup& ws) {
  return std::make_unique<ParabolicEstimate>(id, c, ws);
}
std::unique_ptr<Estimate> make_mhd(const std::string& id, const MhdCase& c,
                                   const LinearizedCoeffs& coeffs, const WeightSetup& ws,
                                   double tol) {
  return std::make_unique<MhdEstimate>(id, c, coeffs, ws, tol);
}
std::unique_ptr<Estimate> make_first_order(const std::string& id, const FirstOrderCase& c,
                                           const WeightSetup& ws, double threshold) {
  return std::make_unique<FirstOrderEstimate>(id, c, ws, threshold);
}

std::vector<std::string> known_estimates() {
  return {"elliptic",
          "parabolic_singular",
          "parabolic_regular",
          "mhd_singular",
          "mhd_regular",
          "first_order_P",
          "first_order_Q",
          "first_order_P_t0_singular",
          "first_order_Q_t0_singular",
          "first_order_P_subdomain",
          "first_order_Q_subdomain",
          "first_order_P_t0_regular",
          "first_order_Q_t0_regular"};
}

WeightSetup default_weight_setup(const GridSpec& spec, double t0, double beta_margin, double eps) {
  auto [g, bp] = build_grid(spec, default_gamma());
  WeightSetup ws;
  ws.g = g;
  ws.bp = bp;
  ws.d = build_distance_d(g, bp);
  ws.t0 = t0;
  ws.beta_margin = beta_margin;
  ws.eps = eps;
  return ws;
}

std::unique_ptr<Estimate> default_estimate(const std::string& id, const WeightSetup& ws) {
  using K = FirstOrderKind;
  using W = FirstOrderWeight;
  if (id == "elliptic") {
    EllipticCase c;
    c.y = sample(ws.g, space_time_bump(ws.t0, 1.0, 0.0), ws.t0);
    c.b = constant_vec(ws.g, {0.2, 0.1, 0.1});
    c.f0 = lap(c.y) + dot(c.b, grad(c.y));
    c.fj = Vec3(ws.g, 0.0);
    return make_elliptic(id, c);
  }
  if (id == "parabolic_singular") return default_parabolic(id, ws, WeightMode::Singular);
  if (id == "parabolic_regular") return default_parabolic(id, ws, WeightMode::Regular);
  if (id == "mhd_singular") return default_mhd(id, ws, WeightMode::Singular);
  if (id == "mhd_regular") return default_mhd(id, ws, WeightMode::Regular);
  if (id == "first_order_P") return default_first_order(id, ws, K::P, W::Volume, false);
  if (id == "first_order_Q") return default_first_order(id, ws, K::Q, W::Volume, false);
  if (id == "first_order_P_t0_singular") return default_first_order(id, ws, K::P, W::T0Singular, false);
  if (id == "first_order_Q_t0_singular") return default_first_order(id, ws, K::Q, W::T0Singular, false);
  if (id == "first_order_P_subdomain") return default_first_order(id, ws, K::P, W::Volume, true);
  if (id == "first_order_Q_subdomain") return default_first_order(id, ws, K::Q, W::Volume, true);
  if (id == "first_order_P_t0_regular") return default_first_order(id, ws, K::P, W::T0Regular, true);
  if (id == "first_order_Q_t0_regular") return default_first_order(id, ws, K::Q, W::T0Regular, true);
  throw PreconditionError("unknown estimate id '" + id + "'");
}

// ---------------------------------------------------------------- sweeps

CarlemanReport sweep(const Estimate& est, const WeightSetup& ws, const SweepParams& p) {
  if (p.s_list.empty() || p.lambda_list.empty())
    throw PreconditionError("sweep: s and lambda lists must be nonempty");
  std::vector<std::pair<double, double>> cells;
  for (double l : p.lambda_list)
    for (double s : p.s_list) cells.emplace_back(l, s);
  std::sort(cells.begin(), cells.end());
  CarlemanReport rep;
  rep.estimate_id = est.id();
  rep.rows = parallel_map<CarlemanRow>(cells.size(), p.threads, [&](std::size_t i) {
    try {
      return est.evaluate(ws, cells[i].second, cells[i].first);
    } catch (const std::exception& e) {
      CarlemanRow r;
      r.estimate_id = est.id();
      r.lambda = cells[i].first;
      r.s = cells[i].second;
      r.n = ws.g->n(0);
      r.log_ratio = r.log_ratio_interior = std::numeric_limits<double>::quiet_NaN();
      r.status = std::string("failed: ") + e.what();
      return r;
    }
  });
  SweepSummary& sm = rep.summary;
  sm.spread_threshold = p.spread_threshold;
  sm.endpoint_s = p.endpoint_s;
  for (double l : [&] {
         auto v = p.lambda_list;
         std::sort(v.begin(), v.end());
         v.erase(std::unique(v.begin(), v.end()), v.end());
         return v;
       }()) {
    SweepSummary::PerLambda pl;
    pl.lambda = l;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rep.rows) {
      if (r.lambda != l) continue;
      bool ok = r.status == "ok" && std::isfinite(r.log_ratio);
      if (!ok) {
        pl.all_finite = false;
        continue;
      }
      lo = std::min(lo, r.log_ratio);
      hi = std::max(hi, r.log_ratio);
    }
    if (pl.all_finite && std::isfinite(lo)) {
      pl.min_ratio = std::exp(lo);
      pl.max_ratio = std::exp(hi);
      pl.spread = std::exp(hi - lo);
    } else {
      pl.spread = std::numeric_limits<double>::infinity();
    }
    sm.all_finite = sm.all_finite && pl.all_finite;
    sm.max_ratio = std::max(sm.max_ratio, pl.max_ratio);
    sm.max_spread = std::max(sm.max_spread, pl.spread);
    sm.per_lambda.push_back(pl);
  }
  for (const auto& r : rep.rows)
    if (r.s >= p.endpoint_s) {
      sm.max_endpoint_fraction = std::max(sm.max_endpoint_fraction, r.endpoint_fraction);
      sm.max_endpoint_weight_fraction =
          std::max(sm.max_endpoint_weight_fraction, r.endpoint_weight_fraction);
    }
  return rep;
}

namespace {
std::string num(double v) { return csv_number(v); }
}  // namespace

void write_report_csv(const std::string& path, const CarlemanReport& r,
                      const std::vector<std::string>& header_comments) {
  std::ofstream os(path);
  if (!os) throw PreconditionError("cannot write " + path);
  for (const auto& c : header_comments) os << "# " << c << "\n";
  // column set from the first well-formed row
  const CarlemanRow* proto = nullptr;
  for (const auto& row : r.rows)
    if (!row.lhs.empty()) {
      proto = &row;
      break;
    }
  std::vector<std::string> lnames, inames, bnames;
  if (proto) {
    for (const auto& t : proto->lhs) lnames.push_back(t.name);
    for (const auto& t : proto->rhs_interior) inames.push_back(t.name);
    for (const auto& t : proto->rhs_boundary) bnames.push_back(t.name);
  }
  os << "estimate_id,s,lambda,n";
  for (const auto& n : lnames) os << ",lhs_" << n << "_value,lhs_" << n << "_log_scale";
  for (const auto& n : inames) os << ",rhs_" << n << "_value,rhs_" << n << "_log_scale";
  for (const auto& n : bnames) os << ",bdy_" << n << "_value,bdy_" << n << "_log_scale";
  os << ",lhs_log,rhs_interior_log,rhs_boundary_log,boundary_in_ratio,log_ratio,ratio,"
        "ratio_interior,endpoint_fraction,endpoint_weight_fraction,region_points,"
        "boundary_points,spread,status\n";
  auto emit_terms = [&](const std::vector<Term>& ts, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      if (k < ts.size())
        os << "," << num(ts[k].value.normalized) << "," << num(ts[k].value.log_scale);
      else
        os << ",,";
    }
  };
  for (const auto& row : r.rows) {
    os << row.estimate_id << "," << num(row.s) << "," << num(row.lambda) << "," << row.n;
    emit_terms(row.lhs, lnames.size());
    emit_terms(row.rhs_interior, inames.size());
    emit_terms(row.rhs_boundary, bnames.size());
    os << "," << num(row.lhs_total.log()) << "," << num(row.rhs_interior_total.log()) << ","
       << num(row.rhs_boundary_total.log()) << "," << (row.boundary_in_ratio ? 1 : 0) << ","
       << num(row.log_ratio) << "," << num(row.ratio()) << "," << num(row.ratio_interior()) << ","
       << num(row.endpoint_fraction) << "," << num(row.endpoint_weight_fraction) << ","
       << row.region_points << "," << row.boundary_points << ",,";
    std::string st = row.status;
    std::replace(st.begin(), st.end(), ',', ';');
    os << st << "\n";
  }
  const std::size_t blanks = 2 * (lnames.size() + inames.size() + bnames.size());
  for (const auto& pl : r.summary.per_lambda) {
    os << r.estimate_id << ",all," << num(pl.lambda) << "," << (r.rows.empty() ? 0 : r.rows[0].n);
    for (std::size_t k = 0; k < blanks; ++k) os << ",";
    os << ",,,,," << num(pl.max_ratio) << "," << num(pl.min_ratio) << ",,,,," << num(pl.spread)
       << ",summary\n";
  }
}

}  // namespace cmhd

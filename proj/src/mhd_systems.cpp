#include "cmhd/mhd_systems.hpp"

#include <algorithm>

namespace cmhd {

namespace {

double series_max(const VecSeries& s) {
  double m = 0.0;
  for (const auto& v : s) m = std::max(m, max_abs(v));
  return m;
}
double series_max(const ScalarSeries& s) {
  double m = 0.0;
  for (const auto& v : s) m = std::max(m, max_abs(v));
  return m;
}

const GridPtr& grid_of(const VecSeries& s, const char* what) {
  if (s.empty()) throw PreconditionError(std::string(what) + ": empty series");
  return s[0].grid();
}

void check_series(const VecSeries& s, const Grid& g, const char* what) {
  if (s.empty()) return;
  if (static_cast<int>(s.size()) != g.nt() + 1)
    throw PreconditionError(std::string(what) + ": series length does not match the time grid");
  for (const auto& v : s)
    if (!v.grid()->same_as(g)) throw PreconditionError(std::string(what) + ": grid mismatch");
}
void check_series(const ScalarSeries& s, const Grid& g, const char* what) {
  if (s.empty()) return;
  if (static_cast<int>(s.size()) != g.nt() + 1)
    throw PreconditionError(std::string(what) + ": series length does not match the time grid");
  for (const auto& v : s)
    if (!v.g->same_as(g)) throw PreconditionError(std::string(what) + ": grid mismatch");
}

void check_state(const MhdState& s, const char* what) {
  const Grid& g = *s.g;
  check_series(s.u, g, what);
  check_series(s.H, g, what);
  check_series(s.p, g, what);
  check_series(s.F_ext, g, what);
  check_series(s.G_ext, g, what);
  if (s.u.empty() || s.H.empty() || s.p.empty())
    throw PreconditionError(std::string(what) + ": state needs u, H and p");
  require_same_grid(s.nu, s.u[0][0], what);
  require_same_grid(s.kappa, s.u[0][0], what);
}

/// Transposed Jacobian applied to a vector: (grad v)^T x.
Vec3 grad_t_times(const Vec3& v, const Vec3& x) { return matvec(transpose(jacobian(v)), x); }

Vec3 zero_vec(const GridPtr& g) { return Vec3(g, 0.0); }

const Vec3& or_zero(const VecSeries& s, std::size_t m, const Vec3& z) {
  return s.empty() ? z : s[m];
}
const Scalar& or_zero(const ScalarSeries& s, std::size_t m, const Scalar& z) {
  return s.empty() ? z : s[m];
}

VecSeries nth_time_deriv(const VecSeries& f, double dt, int k) {
  VecSeries r = f;
  for (int j = 0; j < k; ++j) r = time_deriv(r, dt);
  return r;
}

// Parts of the difference system that do not involve the background velocity or field.
Vec3 momentum_static(const Vec3& u, const Scalar& p, const Scalar& nu2, const Vec3& gnu2) {
  Vec3 r = -1.0 * (nu2 * lap(u));
  r -= convect(gnu2, u);
  r -= grad_t_times(u, gnu2);
  r += grad(p);
  return r;
}
Vec3 induction_static(const Vec3& H, const Scalar& kappa2, const Vec3& gk2) {
  Vec3 r = -1.0 * (kappa2 * lap(H));
  r += cross(gk2, rot(H));
  return r;
}

// Terms bilinear in (background, difference).
Vec3 momentum_bilinear(const Vec3& u1, const Vec3& u2, const Vec3& H1, const Vec3& H2,
                       const Vec3& u, const Vec3& H) {
  Vec3 r = convect(u, u2);
  r += convect(u1, u);
  r -= convect(H1, H);
  r -= convect(H, H2);
  r -= grad_t_times(H, H2);
  r -= grad_t_times(H1, H);
  return r;
}
Vec3 induction_bilinear(const Vec3& u1, const Vec3& u2, const Vec3& H1, const Vec3& H2,
                        const Vec3& u, const Vec3& H) {
  Vec3 r = -1.0 * convect(H, u2);
  r += convect(u1, H);
  r -= convect(H1, u);
  r += convect(u, H2);
  return r;
}

int binom(int k, int j) {
  int r = 1;
  for (int i = 1; i <= j; ++i) r = r * (k - j + i) / i;
  return r;
}

}  // namespace

double ResidualSet::max_momentum() const { return series_max(momentum); }
double ResidualSet::max_induction() const { return series_max(induction); }
double ResidualSet::max_div_u() const { return series_max(div_u); }
double ResidualSet::max_div_H() const { return series_max(div_H); }
double ResidualSet::max_abs() const { return std::max(max_momentum(), max_induction()); }

ResidualSet residual_mhd(const MhdState& s) {
  check_state(s, "residual_mhd");
  const Grid& g = *s.g;
  const VecSeries ut = time_deriv(s.u, g.dt());
  const VecSeries Ht = time_deriv(s.H, g.dt());
  const Vec3 z = zero_vec(s.g);
  ResidualSet r;
  for (int m = 0; m <= g.nt(); ++m) {
    const Vec3& u = s.u[m];
    const Vec3& H = s.H[m];
    Vec3 mom = ut[m] - div((2.0 * s.nu) * sym_grad(u));
    mom += convect(u, u);
    mom -= convect(H, H);
    mom += grad(s.p[m]);
    mom -= grad_t_times(H, H);
    mom -= or_zero(s.F_ext, m, z);
    Vec3 ind = Ht[m] + rot(s.kappa * rot(H));
    ind += convect(u, H);
    ind -= convect(H, u);
    ind -= or_zero(s.G_ext, m, z);
    r.momentum.push_back(std::move(mom));
    r.induction.push_back(std::move(ind));
    r.div_u.push_back(div(u));
    r.div_H.push_back(div(H));
  }
  return r;
}

ResidualSet residual_linearized(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                const LinearizedCoeffs& c, const VecSeries& F,
                                const VecSeries& G, const ScalarSeries& h) {
  const GridPtr& gp = grid_of(u, "residual_linearized");
  const Grid& g = *gp;
  for (const VecSeries* s : {&u, &H, &F, &G, &c.B1, &c.B2, &c.B3, &c.C1, &c.C2, &c.C3, &c.C4,
                             &c.C5, &c.D1, &c.D2, &c.D3})
    check_series(*s, g, "residual_linearized");
  for (const ScalarSeries* s : {&p, &h, &c.nu, &c.kappa}) check_series(*s, g, "residual_linearized");
  if (H.empty() || p.empty()) throw PreconditionError("residual_linearized: need u, p and H");
  const VecSeries ut = time_deriv(u, g.dt());
  const VecSeries Ht = time_deriv(H, g.dt());
  const Vec3 z = zero_vec(gp);
  const Scalar zs(gp, 0.0);
  ResidualSet r;
  for (int m = 0; m <= g.nt(); ++m) {
    const Vec3& um = u[m];
    const Vec3& Hm = H[m];
    Vec3 mom = ut[m] - or_zero(c.nu, m, zs) * lap(um);
    mom += convect(or_zero(c.B1, m, z), um);
    mom += convect(um, or_zero(c.B2, m, z));
    mom += grad(dot(or_zero(c.B3, m, z), um));
    mom += convect(or_zero(c.C1, m, z), Hm);
    mom += convect(Hm, or_zero(c.C2, m, z));
    mom += grad(dot(or_zero(c.C3, m, z), Hm));
    mom += grad(p[m]);
    mom -= or_zero(F, m, z);
    Vec3 ind = Ht[m] - or_zero(c.kappa, m, zs) * lap(Hm);
    ind += convect(or_zero(c.D1, m, z), Hm);
    ind += convect(Hm, or_zero(c.D2, m, z));
    ind += cross(or_zero(c.D3, m, z), rot(Hm));
    ind += convect(or_zero(c.C4, m, z), um);
    ind += convect(um, or_zero(c.C5, m, z));
    ind -= or_zero(G, m, z);
    r.momentum.push_back(std::move(mom));
    r.induction.push_back(std::move(ind));
    r.div_u.push_back(div(um) - or_zero(h, m, zs));
    r.div_H.push_back(div(Hm));
  }
  return r;
}

DifferencePack make_difference_pack(const MhdState& s1, const MhdState& s2) {
  check_state(s1, "make_difference_pack");
  check_state(s2, "make_difference_pack");
  if (!s1.g->same_as(*s2.g)) throw PreconditionError("make_difference_pack: grid mismatch");
  const double dt = s1.g->dt();
  DifferencePack d;
  for (int m = 0; m <= s1.g->nt(); ++m) {
    d.u.push_back(s1.u[m] - s2.u[m]);
    d.H.push_back(s1.H[m] - s2.H[m]);
    d.p.push_back(s1.p[m] - s2.p[m]);
  }
  d.nu = s1.nu - s2.nu;
  d.kappa = s1.kappa - s2.kappa;
  d.w1 = time_deriv(d.u, dt);
  d.w2 = time_deriv(d.w1, dt);
  d.h1 = time_deriv(d.H, dt);
  d.h2 = time_deriv(d.h1, dt);
  d.q1 = time_deriv(d.p, dt);
  d.q2 = time_deriv(d.q1, dt);
  return d;
}

CoefficientSources coefficient_sources(const Scalar& nu, const Scalar& kappa, const MhdState& s1) {
  CoefficientSources cs;
  for (int m = 0; m <= s1.g->nt(); ++m) {
    cs.momentum.push_back(div((2.0 * nu) * sym_grad(s1.u[m])));
    cs.induction.push_back(-1.0 * rot(kappa * rot(s1.H[m])));
  }
  return cs;
}

ResidualSet residual_difference(const DifferencePack& pack, const MhdState& s1,
                                const MhdState& s2, int order) {
  if (order < 0 || order > 2) throw PreconditionError("residual_difference: order must be 0, 1 or 2");
  check_state(s1, "residual_difference");
  check_state(s2, "residual_difference");
  if (!s1.g->same_as(*s2.g)) throw PreconditionError("residual_difference: grid mismatch");
  const Grid& g = *s1.g;
  const double dt = g.dt();
  check_series(pack.u, g, "residual_difference");
  if (pack.u.empty()) throw PreconditionError("residual_difference: empty difference pack");

  // d_t^j of the differences, j = 0..order
  std::vector<const VecSeries*> du{&pack.u, &pack.w1, &pack.w2};
  std::vector<const VecSeries*> dH{&pack.H, &pack.h1, &pack.h2};
  std::vector<const ScalarSeries*> dp{&pack.p, &pack.q1, &pack.q2};
  for (int j = 0; j <= order; ++j)
    if (du[j]->empty() || dH[j]->empty() || dp[j]->empty())
      throw PreconditionError("residual_difference: pack lacks the time derivatives for this order");

  // d_t^j of the backgrounds
  std::vector<VecSeries> bu1, bu2, bH1, bH2;
  for (int j = 0; j <= order; ++j) {
    bu1.push_back(nth_time_deriv(s1.u, dt, j));
    bu2.push_back(nth_time_deriv(s2.u, dt, j));
    bH1.push_back(nth_time_deriv(s1.H, dt, j));
    bH2.push_back(nth_time_deriv(s2.H, dt, j));
  }
  const VecSeries ut = time_deriv(*du[order], dt);
  const VecSeries Ht = time_deriv(*dH[order], dt);
  const Vec3 z = zero_vec(s1.g);
  VecSeries dF, dG;
  {
    VecSeries F, G;
    for (int m = 0; m <= g.nt(); ++m) {
      F.push_back(or_zero(s1.F_ext, m, z) - or_zero(s2.F_ext, m, z));
      G.push_back(or_zero(s1.G_ext, m, z) - or_zero(s2.G_ext, m, z));
    }
    dF = nth_time_deriv(F, dt, order);
    dG = nth_time_deriv(G, dt, order);
  }
  const Vec3 gnu2 = grad(s2.nu), gk2 = grad(s2.kappa);
  const Scalar nu = s1.nu - s2.nu, kappa = s1.kappa - s2.kappa;

  ResidualSet r;
  for (int m = 0; m <= g.nt(); ++m) {
    const Vec3& uk = (*du[order])[m];
    const Vec3& Hk = (*dH[order])[m];
    Vec3 mom = ut[m] + momentum_static(uk, (*dp[order])[m], s2.nu, gnu2);
    Vec3 ind = Ht[m] + induction_static(Hk, s2.kappa, gk2);
    for (int j = 0; j <= order; ++j) {
      const double c = binom(order, j);
      const int b = order - j;
      mom += c * momentum_bilinear(bu1[b][m], bu2[b][m], bH1[b][m], bH2[b][m], (*du[j])[m],
                                   (*dH[j])[m]);
      ind += c * induction_bilinear(bu1[b][m], bu2[b][m], bH1[b][m], bH2[b][m], (*du[j])[m],
                                    (*dH[j])[m]);
    }
    mom -= div((2.0 * nu) * sym_grad(bu1[order][m]));
    ind += rot(kappa * rot(bH1[order][m]));
    mom -= dF[m];
    ind -= dG[m];
    r.momentum.push_back(std::move(mom));
    r.induction.push_back(std::move(ind));
    r.div_u.push_back(div(uk));
    r.div_H.push_back(div(Hk));
  }
  return r;
}

DifferenceSlice difference_lhs_slice(const Vec3& ut, const Vec3& u, const Scalar& p,
                                     const Vec3& Ht, const Vec3& H, const Background& bg,
                                     DiffusionForm form) {
  DifferenceSlice out;
  if (form == DiffusionForm::Expanded) {
    const Vec3 gnu2 = grad(bg.nu2), gk2 = grad(bg.kappa2);
    out.momentum = ut + momentum_static(u, p, bg.nu2, gnu2);
    out.induction = Ht + induction_static(H, bg.kappa2, gk2);
  } else {
    out.momentum = ut - div((2.0 * bg.nu2) * sym_grad(u)) + grad(p);
    out.induction = Ht + rot(bg.kappa2 * rot(H));
  }
  out.momentum += momentum_bilinear(bg.u1, bg.u2, bg.H1, bg.H2, u, H);
  out.induction += induction_bilinear(bg.u1, bg.u2, bg.H1, bg.H2, u, H);
  return out;
}

Background background_at(const MhdState& s1, const MhdState& s2, int m) {
  const Vec3 z = zero_vec(s1.g);
  return {s1.u[m], s2.u[m], s1.H[m], s2.H[m], s2.nu, s2.kappa,
          or_zero(s1.F_ext, m, z) - or_zero(s2.F_ext, m, z),
          or_zero(s1.G_ext, m, z) - or_zero(s2.G_ext, m, z)};
}

DifferenceLhs difference_lhs(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                             const MhdState& s1, const MhdState& s2) {
  const Grid& g = *s1.g;
  check_series(u, g, "difference_lhs");
  check_series(H, g, "difference_lhs");
  check_series(p, g, "difference_lhs");
  const VecSeries ut = time_deriv(u, g.dt());
  const VecSeries Ht = time_deriv(H, g.dt());
  DifferenceLhs out;
  for (int m = 0; m <= g.nt(); ++m) {
    DifferenceSlice sl = difference_lhs_slice(ut[m], u[m], p[m], Ht[m], H[m], background_at(s1, s2, m));
    out.momentum.push_back(std::move(sl.momentum));
    out.induction.push_back(std::move(sl.induction));
  }
  return out;
}

CutoffRewrite rewrite_with_cutoff(const DifferencePack& pack, const MhdState& s1,
                                  const MhdState& s2, const ScalarSeries& chi2) {
  const Grid& g = *s1.g;
  check_series(chi2, g, "rewrite_with_cutoff");
  if (chi2.empty()) throw PreconditionError("rewrite_with_cutoff: empty cutoff");
  VecSeries ut, Ht;
  ScalarSeries pt;
  for (int m = 0; m <= g.nt(); ++m) {
    ut.push_back(chi2[m] * pack.u[m]);
    Ht.push_back(chi2[m] * pack.H[m]);
    pt.push_back(chi2[m] * pack.p[m]);
  }
  const DifferenceLhs cut = difference_lhs(ut, pt, Ht, s1, s2);
  const DifferenceLhs base = difference_lhs(pack.u, pack.p, pack.H, s1, s2);
  const CoefficientSources src = coefficient_sources(pack.nu, pack.kappa, s1);
  const Vec3 z = zero_vec(s1.g);
  CutoffRewrite out;
  for (int m = 0; m <= g.nt(); ++m) {
    Vec3 cu = cut.momentum[m] - chi2[m] * base.momentum[m];
    Vec3 cH = cut.induction[m] - chi2[m] * base.induction[m];
    Vec3 dF = or_zero(s1.F_ext, m, z) - or_zero(s2.F_ext, m, z);
    Vec3 dG = or_zero(s1.G_ext, m, z) - or_zero(s2.G_ext, m, z);
    // L(chi u) = chi (source) + commutator
    out.residual.momentum.push_back(cut.momentum[m] - chi2[m] * (src.momentum[m] + dF) - cu);
    out.residual.induction.push_back(cut.induction[m] - chi2[m] * (src.induction[m] + dG) - cH);
    const Vec3 gc = grad(chi2[m]);
    out.residual.div_u.push_back(div(ut[m]) - dot(gc, pack.u[m]));
    out.residual.div_H.push_back(div(Ht[m]) - dot(gc, pack.H[m]));
    out.commutator_u.push_back(std::move(cu));
    out.commutator_H.push_back(std::move(cH));
  }
  return out;
}

void attach_forcings(MhdState& s) {
  s.F_ext.clear();
  s.G_ext.clear();
  ResidualSet r = residual_mhd(s);
  s.F_ext = std::move(r.momentum);
  s.G_ext = std::move(r.induction);
}

}  // namespace cmhd

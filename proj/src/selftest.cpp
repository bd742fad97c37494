#include "cmhd/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "cmhd/carleman.hpp"
#include "cmhd/fields_io.hpp"
#include "cmhd/inverse.hpp"
#include "cmhd/runner.hpp"
#include "cmhd/stability.hpp"

namespace cmhd {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Collects checks for one criterion with their timings.
struct Checks {
  explicit Checks(int k) : criterion(k) {}
  int criterion;
  std::vector<CheckResult> out;
  Clock::time_point t = Clock::now();

  void add(const std::string& name, bool pass, const std::string& detail, bool gating = true) {
    out.push_back({criterion, name, pass, gating, detail, since(t)});
    t = Clock::now();
  }
};

struct World {
  GridPtr g;
  BoundaryPartition bp;
  DistanceFunction d;
};

World world(int n, int nt) {
  auto [g, bp] = build_grid(GridSpec{n, n, n, nt, 1.0}, default_gamma());
  World w{g, bp, build_distance_d(g, bp)};
  return w;
}

double order_of(double coarse, double fine) { return std::log2(coarse / fine); }

// ---------------------------------------------------------------- 1: discrete calculus

/// prod_k sin(a_k x_k + p_k) with exact partial derivatives.
struct SinProduct {
  std::array<double, 3> a, p;
  double eval(const std::array<double, 3>& x, const std::array<int, 3>& m) const {
    double v = 1.0;
    for (int k = 0; k < 3; ++k)
      v *= std::pow(a[k], m[k]) * std::sin(a[k] * x[k] + p[k] + m[k] * M_PI / 2.0);
    return v;
  }
};

std::array<int, 3> unit(int k) {
  std::array<int, 3> m{0, 0, 0};
  m[k] = 1;
  return m;
}

struct CalculusErrors {
  double grad = 0, div = 0, rot = 0, lap = 0;
};

CalculusErrors calculus_errors(int n) {
  const World w = world(n, 8);
  const SinProduct f{{1.3, 0.9, 1.7}, {0.2, 0.5, -0.4}};
  const std::array<SinProduct, 3> u{SinProduct{{1.1, 1.6, 0.7}, {0.1, -0.3, 0.6}},
                                    SinProduct{{0.8, 1.2, 1.5}, {0.4, 0.2, -0.1}},
                                    SinProduct{{1.4, 0.6, 1.0}, {-0.2, 0.7, 0.3}}};
  Scalar fs(w.g);
  Vec3 us(w.g);
  for (std::size_t p = 0; p < w.g->npts(); ++p) {
    const auto x = w.g->xyz(p);
    fs[p] = f.eval(x, {0, 0, 0});
    for (int c = 0; c < 3; ++c) us[c][p] = u[c].eval(x, {0, 0, 0});
  }
  const Vec3 gf = grad(fs), ru = rot(us);
  const Scalar du = div(us), lf = lap(fs);
  CalculusErrors e;
  for (std::size_t p = 0; p < w.g->npts(); ++p) {
    const auto x = w.g->xyz(p);
    double dv = 0.0, lp = 0.0;
    for (int k = 0; k < 3; ++k) {
      e.grad = std::max(e.grad, std::abs(gf[k][p] - f.eval(x, unit(k))));
      dv += u[k].eval(x, unit(k));
      std::array<int, 3> m2{0, 0, 0};
      m2[k] = 2;
      lp += f.eval(x, m2);
    }
    e.div = std::max(e.div, std::abs(du[p] - dv));
    e.lap = std::max(e.lap, std::abs(lf[p] - lp));
    for (int k = 0; k < 3; ++k) {
      const int a = (k + 1) % 3, b = (k + 2) % 3;
      const double exact = u[b].eval(x, unit(a)) - u[a].eval(x, unit(b));
      e.rot = std::max(e.rot, std::abs(ru[k][p] - exact));
    }
  }
  return e;
}

std::vector<CheckResult> criterion1() {
  Checks c(1);
  double rg = 0.0, dr = 0.0;
  for (int n : {8, 16}) {
    const World w = world(n, 8);
    const Scalar q = sample(w.g, [](double x, double y, double z, double) {
      return 1.0 + x - 2.0 * y + 0.5 * z + x * x - 1.5 * x * y + 2.0 * y * z + 0.7 * z * z - x * z;
    });
    const Vec3 v = sample(w.g, [](double x, double y, double z, double) {
      return std::array<double, 3>{x * y + z * z - 0.3 * x, y * y - 2.0 * x * z + 1.0,
                                   x * x + 0.5 * y * z - z};
    });
    rg = std::max(rg, max_abs(rot(grad(q))));
    dr = std::max(dr, max_abs(div(rot(v))));
  }
  c.add("rot grad vanishes on quadratics", rg <= 1e-12, "max " + sci(rg) + " (n = 8, 16)");
  c.add("div rot vanishes on quadratics", dr <= 1e-12, "max " + sci(dr) + " (n = 8, 16)");

  const CalculusErrors e8 = calculus_errors(8), e16 = calculus_errors(16), e32 = calculus_errors(32);
  auto ord = [&](const char* name, double a, double b, double cc) {
    const double o1 = order_of(a, b), o2 = order_of(b, cc);
    c.add(std::string("refinement order of ") + name, std::min(o1, o2) >= 1.8,
          "max-norm orders " + sci(o1) + ", " + sci(o2) + " over n = 8, 16, 32");
  };
  ord("grad", e8.grad, e16.grad, e32.grad);
  ord("div", e8.div, e16.div, e32.div);
  ord("rot", e8.rot, e16.rot, e32.rot);
  ord("lap", e8.lap, e16.lap, e32.lap);
  return c.out;
}

// ---------------------------------------------------------------- 2: algebra

std::vector<CheckResult> criterion2() {
  Checks c(2);
  const World w = world(8, 8);
  const Vec3 b = sample(w.g, [](double x, double y, double z, double) {
    return std::array<double, 3>{std::sin(3 * x + y), std::cos(2 * y - z) - 0.3, x * z + 0.7};
  });
  const Vec3 x = sample(w.g, [](double x, double y, double z, double) {
    return std::array<double, 3>{y - z, std::exp(0.5 * x), std::sin(x * y * z) + 1.2};
  });
  const Ten3 B = skew_of(b);
  const double cross_err = max_abs(matvec(B, x) - cross(x, b));
  c.add("B x equals x cross b", cross_err <= 1e-14, "max " + sci(cross_err));
  const double det_b = max_abs(det3(B));
  c.add("det B is exactly zero", det_b == 0.0, "max |det B| = " + sci(det_b));
  const Vec3 u = sample(w.g, [](double x, double y, double z, double) {
    return std::array<double, 3>{y + z, x + z, x + y};
  });
  const Scalar dE = det3(sym_grad(u));
  double dev = 0.0;
  for (double v : dE.v) dev = std::max(dev, std::abs(v - 2.0));
  c.add("det E(u) = 2 for u = (y+z, x+z, x+y)", dev <= 1e-12, "max |det E - 2| = " + sci(dev));
  return c.out;
}

// ---------------------------------------------------------------- 3: weights

std::vector<CheckResult> criterion3() {
  Checks c(3);
  const double eps = 0.125, t0 = 0.5;
  const World w = world(24, 48);
  const Grid& g = *w.g;

  bool d_ok = true;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const double gn = std::sqrt(w.d.grad[0][p] * w.d.grad[0][p] + w.d.grad[1][p] * w.d.grad[1][p] +
                                w.d.grad[2][p] * w.d.grad[2][p]);
    if (w.d.d[p] < 0.0 || !(gn > 0.0)) d_ok = false;
    if (w.bp.rest_mask[p] && w.d.d[p] != 0.0) d_ok = false;
    if (!g.on_boundary(p) && !(w.d.d[p] > 0.0)) d_ok = false;
  }
  c.add("distance: d >= 0, d = 0 off Gamma, d > 0 inside, grad d != 0", d_ok, "n = 24");

  const TimeProfile l = build_time_profile(t0, 1.0, g);
  bool l_ok = std::abs(l.eval(0.0)) <= 1e-14 && std::abs(l.eval(1.0)) <= 1e-14;
  for (int m = 1; m < g.nt(); ++m) l_ok = l_ok && l.l[m] > 0.0 && l.l[m] <= l.eval(t0) + 1e-14;
  c.add("time profile: zero at both ends, positive inside, peak at t0", l_ok,
        "peak " + sci(l.eval(t0)));

  const SingularWeight sw = build_singular_weight(w.d, l, 1.0, 1.0);
  const Scalar a0 = sw.alpha(t0);
  bool a_ok = true;
  double amax = -1e300;
  for (int m = 1; m < g.nt(); ++m) {
    const Scalar a = sw.alpha(g.t(m));
    for (std::size_t p = 0; p < g.npts(); ++p) {
      a_ok = a_ok && a[p] < 0.0 && a[p] <= a0[p] + 1e-12 * std::abs(a0[p]);
      amax = std::max(amax, a[p]);
    }
  }
  c.add("singular weight: alpha < 0 and alpha(., t) <= alpha(., t0)", a_ok, "max alpha " + sci(amax));

  const RegularWeight rw = build_regular_weight(w.d, t0, 1.0, 1.0, 1.0, 0.1);
  const Scalar psi0 = rw.psi(t0);
  bool r_ok = true;
  for (int m = 0; m <= g.nt(); ++m) {
    const Scalar ps = rw.psi(g.t(m));
    for (std::size_t p = 0; p < g.npts(); ++p)
      r_ok = r_ok && ps[p] >= -1e-12 && ps[p] <= psi0[p] + 1e-12;
  }
  c.add("regular weight: psi >= 0 and peaks at t0", r_ok, "beta " + sci(rw.beta));

  const LevelSetReport ls = check_level_sets(w.d, rw, eps);
  c.add("level set (i): Q_eps inside Omega_eps x (0,T)", ls.inside_slab, "eps 0.125");
  c.add("level set (ii): Omega_eps x {t0} inside Q_eps", ls.contains_t0_slice, "eps 0.125");
  c.add("level set (iii): closure of Q_eps misses t = 0, T", ls.away_from_ends, "eps 0.125");
  c.add("level set (iv): Omega_3eps x (t0 - delta, t0) inside Q_2eps", ls.backward_strip,
        "delta " + sci(ls.delta_eps));

  const CutoffSet cs = build_cutoffs(eps, w.d, rw);
  bool chi_ok = true;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const double v = cs.chi1[p], dv = w.d.d[p];
    chi_ok = chi_ok && v >= 0.0 && v <= 1.0;
    if (dv <= 3.0 * eps) chi_ok = chi_ok && v == 0.0;
    if (dv >= 4.0 * eps) chi_ok = chi_ok && v == 1.0;
  }
  for (const auto& s : cs.chi2)
    for (double v : s.v) chi_ok = chi_ok && v >= 0.0 && v <= 1.0;
  chi_ok = chi_ok && cs.eta_of(t0) == 1.0;
  c.add("cutoffs: values in [0,1], chi1 = 0 on d <= 3eps and 1 on d >= 4eps, eta(t0) = 1",
        chi_ok, "n = 24, nt = 48");
  return c.out;
}

// ---------------------------------------------------------------- 4: manufactured residuals

/// Space-time L2 norm of the difference-identity defect for one order.
double identity_defect(const Scenario& sc, const ResidualSet& r1, const ResidualSet& r2, int k) {
  const ResidualSet rd = residual_difference(sc.pack, sc.s1, sc.s2, k);
  VecSeries dm(r1.momentum.size()), di(r1.induction.size());
  for (std::size_t m = 0; m < dm.size(); ++m) {
    dm[m] = r1.momentum[m] - r2.momentum[m];
    di[m] = r1.induction[m] - r2.induction[m];
  }
  const double dt = sc.s1.g->dt();
  for (int j = 0; j < k; ++j) {
    dm = time_deriv(dm, dt);
    di = time_deriv(di, dt);
  }
  const Mask all = full_mask(*sc.s1.g);
  double sum = 0.0;
  for (std::size_t m = 0; m < dm.size(); ++m) {
    const double wt = (m == 0 || m + 1 == dm.size()) ? 0.5 : 1.0;
    const Scalar dens = norm2(rd.momentum[m] - dm[m]) + norm2(rd.induction[m] - di[m]);
    sum += wt * dt * integrate_weighted(dens, all).value();
  }
  return std::sqrt(sum);
}

std::vector<CheckResult> criterion4() {
  Checks c(4);
  {
    const World w = world(16, 32);
    const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
    const double r1 = residual_mhd(sc.s1).max_abs(), r2 = residual_mhd(sc.s2).max_abs();
    c.add("forced-system residuals", std::max(r1, r2) <= 1e-12,
          "max " + sci(r1) + ", " + sci(r2) + " at n = 16, nt = 32");
  }
  std::array<double, 3> e12{}, e24{};
  for (int n : {12, 24}) {
    const World w = world(n, 2 * n);
    const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
    const ResidualSet r1 = residual_mhd(sc.s1), r2 = residual_mhd(sc.s2);
    for (int k = 0; k <= 2; ++k) (n == 12 ? e12 : e24)[k] = identity_defect(sc, r1, r2, k);
  }
  for (int k = 0; k <= 2; ++k) {
    const double o = order_of(e12[k], e24[k]);
    c.add("difference identity order, time order " + std::to_string(k), o >= 1.5,
          "L2 defect " + sci(e12[k]) + " -> " + sci(e24[k]) + ", order " + sci(o));
  }
  return c.out;
}

// ---------------------------------------------------------------- 5: Carleman ratios

std::vector<CheckResult> criterion5(const SelftestOptions& opt) {
  Checks c(5);
  const WeightSetup ws = default_weight_setup(GridSpec{16, 16, 16, 32, 1.0}, 0.5, 0.1, 0.125);
  SweepParams sp;
  sp.threads = opt.threads;
  for (const auto& id : known_estimates()) {
    const auto est = default_estimate(id, ws);
    const CarlemanReport r = sweep(*est, ws, sp);
    bool ok_rows = r.summary.all_finite;
    for (const auto& row : r.rows) ok_rows = ok_rows && row.status == "ok";
    const bool endpoint_ok = r.summary.max_endpoint_fraction < 1e-10;
    c.add(id + ": finite ratios, endpoint share below 1e-10 for s >= 8", ok_rows && endpoint_ok,
          "endpoint share " + sci(r.summary.max_endpoint_fraction));
    c.add(id + ": ratio spread over s within threshold", r.summary.spread_ok(),
          "max spread " + sci(r.summary.max_spread) + " (threshold " +
              sci(r.summary.spread_threshold) + ")",
          false);
  }
  return c.out;
}

// ---------------------------------------------------------------- 6: exact-data reconstruction

std::vector<CheckResult> criterion6() {
  Checks c(6);
  std::array<double, 2> enu{}, ek{};
  std::array<bool, 2> conv{};
  const std::array<int, 2> ns{12, 24};
  for (int i = 0; i < 2; ++i) {
    const World w = world(ns[i], 2 * ns[i]);
    const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
    const ReconContext ctx = make_context(w.g, w.bp, w.d, 0.5);
    const ReconstructionResult r = reconstruct(ctx, sc, observe(sc, 0.0, 1), ReconParams{});
    enu[i] = r.nu.rel_err_H1;
    ek[i] = r.kappa.rel_err_H1;
    conv[i] = r.nu.stats.converged && r.kappa.stats.converged;
  }
  c.add("solves converge", conv[0] && conv[1], "n = 12, 24");
  c.add("nu relative H1 error at n = 24 <= 2%", enu[1] <= 0.02, sci(100 * enu[1]) + "%");
  c.add("kappa relative H1 error at n = 24 <= 3%", ek[1] <= 0.03, sci(100 * ek[1]) + "%");
  const double onu = order_of(enu[0], enu[1]), ok = order_of(ek[0], ek[1]);
  c.add("nu refinement order >= 1.5", onu >= 1.5, "order " + sci(onu) + " over n = 12, 24");
  c.add("kappa refinement order >= 1.5", ok >= 1.5, "order " + sci(ok) + " over n = 12, 24");
  return c.out;
}

// ---------------------------------------------------------------- 7: stability

std::vector<CheckResult> criterion7(const SelftestOptions& opt) {
  Checks c(7);
  {
    const World w = world(16, 32);
    const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
    StabilityParams p;
    p.threads = opt.threads;
    const StabilityTable t = stability_experiment(make_context(w.g, w.bp, w.d, 0.5), sc, p);
    const LineFit& f = t.slope_total;
    c.add("global slope of H1 error vs D in [0.8, 1.2]", f.slope >= 0.8 && f.slope <= 1.2,
          "slope " + sci(f.slope) + " +- " + sci(f.se_slope) + ", 95% CI [" + sci(f.ci_low) + ", " +
              sci(f.ci_high) + "], " + std::to_string(f.points) + " points, n = 16",
          false);
  }
  {
    const World w = world(24, 48);
    const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
    StabilityParams p;
    p.threads = opt.threads;
    p.recon.mode = ReconMode::Local;
    p.recon.tol = 1e-8;
    const StabilityTable t = stability_experiment(make_context(w.g, w.bp, w.d, 0.5), sc, p);
    const EnvelopeFit& e = t.envelope;
    const bool interior = e.theta > 0.0 && e.theta < 1.0 && !e.theta_at_bound;
    c.add("local fitted theta strictly inside (0, 1)", interior,
          "theta " + sci(e.theta) + " +- " + sci(e.se_theta) +
              (e.theta_at_bound ? " (on the search bound)" : "") + ", n = 24",
          false);
    bool dominates = std::isfinite(e.C);
    for (const auto& r : t.rows)
      if (r.sigma > 0.0) {
        const double env = e.C * (r.D + std::pow(e.M, 1.0 - e.theta) * std::pow(r.D, e.theta));
        dominates = dominates && r.err_nu + r.err_kappa <= env * (1.0 + 1e-12);
      }
    c.add("local envelope C (D + M^(1-theta) D^theta) dominates every error", dominates,
          "C " + sci(e.C) + ", M " + sci(e.M));
  }
  return c.out;
}

// ---------------------------------------------------------------- 8: solver

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Report text without the timestamp, optionally without the worker-count config line.
std::string comparable(const std::string& text, bool drop_threads) {
  const std::string t = strip_timestamp(text);
  if (!drop_threads) return t;
  std::istringstream in(t);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto at = line.find("threads = ");
    if (at != std::string::npos) line = line.substr(0, at);
    out += line + "\n";
  }
  return out;
}

/// Every report file of two runs, compared with the timestamp lines removed.
bool same_reports(const fs::path& a, const fs::path& b, bool drop_threads, std::string& why) {
  std::vector<std::string> fa, fb;
  for (const auto& e : fs::directory_iterator(a)) fa.push_back(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) fb.push_back(e.path().filename().string());
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    why = "file sets differ";
    return false;
  }
  for (const auto& f : fa)
    if (comparable(slurp(a / f), drop_threads) != comparable(slurp(b / f), drop_threads)) {
      why = f + " differs";
      return false;
    }
  why = std::to_string(fa.size()) + " files";
  return true;
}

std::vector<CheckResult> criterion8(const SelftestOptions& opt) {
  Checks c(8);
  const World w = world(8, 16);
  const Scenario sc = manufacture_scenario(w.g, w.d, ScenarioRecipe{});
  const ReconContext ctx = make_context(w.g, w.bp, w.d, 0.5);
  const ObservationData obs = observe(sc, 0.0, 1);
  const int m0 = obs.m0;
  const MeasuredRhs rhs =
      assemble_rhs_from_data(obs, background_at(sc.s1, sc.s2, m0), DerivMode::Clean);
  const ReconParams prm;

  std::vector<std::size_t> rows(w.g->npts());
  for (std::size_t p = 0; p < rows.size(); ++p) rows[p] = p;
  const Ten3 A = 2.0 * sym_grad(sc.s1.u[m0]);
  const Vec3 rb = rot(sc.s1.H[m0]);
  double dmax = 0.0;
  for (const LinearOperator& op :
       {first_order_operator(A, div(A), rows), first_order_operator(skew_of(rb), rot(rb), rows),
        gradient_of_first_order(A, div(A), rows), point_selection(w.g, rows),
        gradient_selection(w.g, rows)})
    dmax = std::max(dmax, dot_test(op, 4, 7));
  LsqProblem pn = build_nu_problem(ctx, rhs, sc.s1.u[m0], sc.nu_true, prm);
  LsqProblem pk = build_kappa_problem(ctx, rhs, sc.s1.H[m0], sc.kappa_true, prm);
  dmax = std::max({dmax, dot_test(pn.op, 4, 7), dot_test(pk.op, 4, 7)});
  c.add("dot-test defect of every operator <= 1e-10", dmax <= 1e-10, "max " + sci(dmax));

  LinearOperator broken = first_order_operator(A, div(A), rows);
  const auto fwd = broken.forward;
  broken.adjoint = [fwd, n = broken.n_in](const Vector& y, Vector& x) {
    x = y.head(static_cast<Eigen::Index>(n)) * 1.01;
  };
  const double neg = dot_test(broken, 4, 7);
  c.add("dot test flags a wrong adjoint", neg > 1e-6, "defect " + sci(neg));

  double rel = 0.0;
  bool monotone = true;
  for (LsqProblem* pr : {&pn, &pk}) {
    if (pr->has_reg) pr->opt.reg = &pr->reg;
    SolveOptions o = pr->opt;
    o.tol = 1e-14;
    o.max_iter = 100000;
    SolveStats st;
    const Vector x = lsq_solve(pr->op, pr->rhs, o, st);
    const Vector xd = dense_lsq_solve(pr->op, pr->rhs, o);
    rel = std::max(rel, (x - xd).norm() / xd.norm());
    for (std::size_t i = 1; i < st.history.size(); ++i)
      monotone = monotone && st.history[i] <= st.history[i - 1] + 1e-12 * st.history[0];
  }
  c.add("8^3 iterative solutions match the dense oracle to 1e-8", rel <= 1e-8,
        "max relative difference " + sci(rel));
  c.add("residual history nonincreasing", monotone, "nu and kappa solves at 8^3");

  // full reports: twice with two workers, once with one
  const fs::path root = opt.scratch_dir.empty()
                            ? fs::temp_directory_path() / ("cmhd-selftest-" + std::to_string(::getpid()))
                            : fs::path(opt.scratch_dir);
  ExperimentConfig cfg;
  cfg.grid.n = 8;
  cfg.grid.nt = 16;
  cfg.weights.s_list = {2, 4};
  cfg.weights.lambda_list = {1, 2};
  cfg.estimates = {"elliptic", "first_order_P", "parabolic_singular"};
  cfg.stability.sigmas = {1e-3, 1e-2};
  std::ostringstream log;
  bool ran = true;
  for (int run = 0; run < 3; ++run) {
    cfg.threads = run < 2 ? 2 : 1;
    for (const char* cmd : {"verify", "reconstruct", "stability", "manufacture"})
      ran = ran && run_command(cmd, cfg, (root / std::to_string(run)).string(), log) == kExitOk;
  }
  std::string why = "a command failed: " + log.str(), why1 = why;
  const bool same = ran && same_reports(root / "0", root / "1", false, why);
  const bool same1 = ran && same_reports(root / "0", root / "2", true, why1);
  std::error_code ec;
  fs::remove_all(root, ec);
  c.add("re-run reports byte-identical apart from the timestamp", same, why + " identical");
  c.add("reports independent of the worker count", same1,
        same1 ? why1 + " identical with 1 and 2 workers" : why1);
  return c.out;
}

}  // namespace

std::vector<CheckResult> check_criterion(int criterion, const SelftestOptions& opt) {
  const auto t = Clock::now();
  try {
    switch (criterion) {
      case 1: return criterion1();
      case 2: return criterion2();
      case 3: return criterion3();
      case 4: return criterion4();
      case 5: return criterion5(opt);
      case 6: return criterion6();
      case 7: return criterion7(opt);
      case 8: return criterion8(opt);
      default: throw PreconditionError("no criterion " + std::to_string(criterion));
    }
  } catch (const std::exception& e) {
    return {CheckResult{criterion, "criterion " + std::to_string(criterion), false, true,
                        std::string("exception: ") + e.what(), since(t)}};
  }
}

bool SelftestReport::gating_pass() const {
  for (const auto& c : checks)
    if (c.gating && !c.pass) return false;
  return true;
}

bool SelftestReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

SelftestReport run_selftest(const SelftestOptions& opt,
                            const std::function<void(const CheckResult&)>& on_result) {
  SelftestReport rep;
  const auto t = Clock::now();
  // per-criterion wall-clock limits where the criterion states one
  const std::map<int, double> limits{{1, 30.0}, {5, 180.0}, {6, 180.0}, {7, 240.0}};
  for (int k = 1; k <= 8; ++k) {
    const auto tk = Clock::now();
    std::vector<CheckResult> rs = check_criterion(k, opt);
    if (const auto it = limits.find(k); it != limits.end()) {
      const double secs = since(tk);
      std::ostringstream name;
      name << "runtime within " << it->second << " s";
      rs.push_back({k, name.str(), secs < it->second, true, sci(secs) + " s", 0.0});
    }
    for (auto& r : rs) {
      if (on_result) on_result(r);
      rep.checks.push_back(std::move(r));
    }
  }
  rep.seconds = since(t);
  CheckResult budget{9, "full suite within 600 s", rep.seconds < 600.0, true,
                     sci(rep.seconds) + " s on " + std::to_string(opt.threads) + " thread(s)",
                     rep.seconds};
  if (on_result) on_result(budget);
  rep.checks.push_back(budget);
  return rep;
}

std::string format_check(const CheckResult& c) {
  std::ostringstream os;
  os << (c.pass ? "PASS" : "FAIL") << " [" << c.criterion << "] " << c.name << ": " << c.detail;
  if (!c.gating) os << " (experiment)";
  char buf[32];
  std::snprintf(buf, sizeof buf, " (%.1f s)", c.seconds);
  os << buf;
  return os.str();
}

}  // namespace cmhd

#include "cmhd/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

#include "cmhd/fields_io.hpp"
#include "cmhd/parallel.hpp"

namespace cmhd {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw PreconditionError("fit_line: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw PreconditionError("fit_line: need at least three points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw PreconditionError("fit_line: non-finite point");
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 1e-12 * std::max(1.0, mx * mx) * static_cast<double>(n)))
    throw PreconditionError("fit_line: degenerate fit, all abscissae coincide");
  LineFit f;
  f.points = n;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    ssr += r * r;
  }
  const double s2 = ssr / static_cast<double>(n - 2);
  f.se_slope = std::sqrt(s2 / sxx);
  f.se_intercept = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
  const boost::math::students_t dist(static_cast<double>(n - 2));
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  f.ci_low = f.slope - q * f.se_slope;
  f.ci_high = f.slope + q * f.se_slope;
  return f;
}

namespace {

double log_env(double D, double M, double theta) {
  return std::log(D + std::pow(M, 1.0 - theta) * std::pow(D, theta));
}

struct EnvelopeEval {
  double misfit = 0.0, log_c = 0.0;
};

EnvelopeEval eval_envelope(const std::vector<double>& D, const std::vector<double>& err,
                           double M, double theta) {
  EnvelopeEval e;
  const std::size_t n = D.size();
  for (std::size_t i = 0; i < n; ++i) e.log_c += std::log(err[i]) - log_env(D[i], M, theta);
  e.log_c /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::log(err[i]) - e.log_c - log_env(D[i], M, theta);
    e.misfit += r * r;
  }
  return e;
}

}  // namespace

EnvelopeFit fit_envelope(const std::vector<double>& D, const std::vector<double>& err, double M) {
  if (D.size() != err.size()) throw PreconditionError("fit_envelope: size mismatch");
  if (D.size() < 3) throw PreconditionError("fit_envelope: need at least three points");
  if (!(M > 0.0)) throw PreconditionError("fit_envelope: prior bound must be > 0");
  for (std::size_t i = 0; i < D.size(); ++i)
    if (!(D[i] > 0.0) || !(err[i] > 0.0) || !std::isfinite(D[i]) || !std::isfinite(err[i]))
      throw PreconditionError("fit_envelope: needs positive finite D and errors");
  const auto [lo, hi] = std::minmax_element(D.begin(), D.end());
  if (!(*hi > *lo * (1.0 + 1e-9))) throw PreconditionError("fit_envelope: degenerate fit, all D equal");

  constexpr double kLo = 1e-4, kHi = 1.0 - 1e-4;
  auto f = [&](double th) { return eval_envelope(D, err, M, th).misfit; };
  const auto best = boost::math::tools::brent_find_minima(f, kLo, kHi, 40);
  EnvelopeFit out;
  out.points = D.size();
  out.M = M;
  out.theta = best.first;
  out.theta_at_bound = out.theta < kLo + 1e-3 || out.theta > kHi - 1e-3;
  const EnvelopeEval at = eval_envelope(D, err, M, out.theta);
  out.misfit = at.misfit;
  out.log_c_fit = at.log_c;
  out.C = 0.0;
  for (std::size_t i = 0; i < D.size(); ++i)
    out.C = std::max(out.C, err[i] / std::exp(log_env(D[i], M, out.theta)));

  // Gauss-Newton covariance of (theta, log C) from a central-difference Jacobian
  const double step = 1e-5;
  const double th_p = std::min(kHi, out.theta + step), th_m = std::max(kLo, out.theta - step);
  double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0;
  for (std::size_t i = 0; i < D.size(); ++i) {
    const double dth = -(log_env(D[i], M, th_p) - log_env(D[i], M, th_m)) / (th_p - th_m);
    jtj00 += dth * dth;
    jtj01 += dth * -1.0;
    jtj11 += 1.0;
  }
  const double det = jtj00 * jtj11 - jtj01 * jtj01;
  const double dof = static_cast<double>(D.size()) - 2.0;
  out.se_theta = (det > 0.0 && dof > 0.0) ? std::sqrt(out.misfit / dof * jtj11 / det)
                                         : std::numeric_limits<double>::infinity();
  return out;
}

StabilityTable stability_experiment(const ReconContext& ctx, const Scenario& sc,
                                    const StabilityParams& p) {
  if (p.sigmas.empty()) throw PreconditionError("stability: sigma list is empty");
  if (p.seeds.empty()) throw PreconditionError("stability: seed list is empty");
  for (double s : p.sigmas)
    if (!(s >= 0.0)) throw PreconditionError("stability: sigma values must be >= 0");

  StabilityTable t;
  t.mode = p.recon.mode;
  t.deriv = p.recon.deriv;
  const bool global = p.recon.mode == ReconMode::Global;
  t.error_reference = global ? "noise-free reconstruction, same regularization"
                             : "true coefficients on the reporting mask";
  const ObservationData clean = observe(sc, 0.0, 0);

  auto params_for = [&](double sigma) {
    ReconParams r = p.recon;
    if (sigma > 0.0) r.rho_reg_factor = p.noisy_rho_reg_factor;
    return r;
  };
  // reference reconstructions per regularization level
  std::map<double, ReconstructionResult> refs;
  if (global)
    for (double s : p.sigmas) {
      const ReconParams r = params_for(s);
      if (!refs.count(r.rho_reg_factor)) refs.emplace(r.rho_reg_factor, reconstruct(ctx, sc, clean, r));
    }

  struct Cell {
    double sigma;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double s : p.sigmas)
    for (auto seed : p.seeds) cells.push_back({s, seed});

  const std::function<StabilityRow(std::size_t)> run = [&](std::size_t i) {
    const Cell c = cells[i];
    const ReconParams r = params_for(c.sigma);
    const ObservationData obs = observe(sc, c.sigma, c.seed);
    const ReconstructionResult res = reconstruct(ctx, sc, obs, r);
    StabilityRow row;
    row.sigma = c.sigma;
    row.seed = c.seed;
    row.D = measurement_norm_D(observation_difference(obs, clean), r.mode, ctx.d, ctx.bp, r.eps).value;
    if (global) {
      const ReconstructionResult& ref = refs.at(r.rho_reg_factor);
      row.err_nu = sobolev_norm(res.nu.estimate - ref.nu.estimate, 1, res.nu.report_mask);
      row.err_kappa = sobolev_norm(res.kappa.estimate - ref.kappa.estimate, 1, res.kappa.report_mask);
    } else {
      row.err_nu = res.nu.err_H1;
      row.err_kappa = res.kappa.err_H1;
    }
    row.iterations = res.nu.stats.iterations + res.kappa.stats.iterations;
    row.rho_reg_nu = res.nu.rho_reg;
    row.rho_reg_kappa = res.kappa.rho_reg;
    row.converged = res.nu.stats.converged && res.kappa.stats.converged;
    return row;
  };
  t.rows = parallel_map<StabilityRow>(cells.size(), p.threads, run);

  std::vector<double> lD, le, lnu, lk, D, e;
  for (const auto& row : t.rows) {
    if (!(row.sigma > 0.0)) continue;
    D.push_back(row.D);
    e.push_back(row.err_nu + row.err_kappa);
    lD.push_back(std::log(row.D));
    le.push_back(std::log(row.err_nu + row.err_kappa));
    lnu.push_back(std::log(row.err_nu));
    lk.push_back(std::log(row.err_kappa));
  }
  if (global) {
    t.slope_total = fit_line(lD, le);
    t.slope_nu = fit_line(lD, lnu);
    t.slope_kappa = fit_line(lD, lk);
  } else {
    t.M = prior_bound_M(sc.pack, sc.nu_true, sc.kappa_true, ctx.d, p.recon.eps);
    t.envelope = fit_envelope(D, e, t.M);
  }
  return t;
}

void write_stability_csv(const std::string& path, const StabilityTable& t,
                         const std::vector<std::string>& header_comments) {
  std::ofstream os(path);
  if (!os) throw PreconditionError("cannot write " + path);
  for (const auto& c : header_comments) os << "# " << c << "\n";
  os << "# error reference: " << t.error_reference << "\n";
  os << "kind,mode,sigma,seed,D_value,err_nu_H1,err_kappa_H1,iterations,reg,deriv,converged,"
        "slope,slope_stderr,theta,theta_stderr,C,M,theta_at_bound\n";
  const std::string mode = to_string(t.mode), deriv = to_string(t.deriv);
  for (const auto& r : t.rows) {
    os << "data," << mode << "," << csv_number(r.sigma) << "," << r.seed << "," << csv_number(r.D)
       << "," << csv_number(r.err_nu) << "," << csv_number(r.err_kappa) << "," << r.iterations << ","
       << csv_number(std::max(r.rho_reg_nu, r.rho_reg_kappa)) << "," << deriv << ","
       << (r.converged ? 1 : 0) << ",,,,,,,\n";
  }
  os << "fit," << mode << ",,,,,,,," << deriv << ",,";
  if (t.mode == ReconMode::Global)
    os << csv_number(t.slope_total.slope) << "," << csv_number(t.slope_total.se_slope) << ",,,,,\n";
  else
    os << ",," << csv_number(t.envelope.theta) << "," << csv_number(t.envelope.se_theta) << ","
       << csv_number(t.envelope.C) << "," << csv_number(t.envelope.M) << ","
       << (t.envelope.theta_at_bound ? 1 : 0) << "\n";
}

}  // namespace cmhd

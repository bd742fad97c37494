/// @file stability.hpp
/// @brief Noise sweeps over the reconstruction: Lipschitz slope (global mode) and the
///        Hoelder envelope exponent (local mode).
#ifndef CMHD_STABILITY_HPP
#define CMHD_STABILITY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cmhd/inverse.hpp"

namespace cmhd {

struct StabilityParams {
  std::vector<double> sigmas{1e-4, 1e-3, 1e-2};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  ReconParams recon;
  double noisy_rho_reg_factor = 1e-4;  ///< used for every sigma > 0 row and the reference
  int threads = 1;
};

struct StabilityRow {
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double D = 0.0;  ///< measurement norm of the applied perturbation
  double err_nu = 0.0, err_kappa = 0.0;
  int iterations = 0;  ///< nu and kappa solves together
  double rho_reg_nu = 0.0, rho_reg_kappa = 0.0;
  bool converged = true;
};

/// Ordinary least squares y = a + b x with standard errors and a 95% interval on b.
struct LineFit {
  double intercept = 0.0, slope = 0.0;
  double se_intercept = 0.0, se_slope = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  std::size_t points = 0;
};
/// Throws PreconditionError when fewer than three points or all x coincide.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// err ~ C (D + M^{1-theta} D^theta), fitted in log space.
struct EnvelopeFit {
  double theta = 0.0, se_theta = 0.0;
  double log_c_fit = 0.0;  ///< least-squares constant
  double C = 0.0;          ///< smallest constant for which the envelope dominates every point
  double misfit = 0.0;     ///< sum of squared log residuals at the optimum
  double M = 0.0;
  std::size_t points = 0;
  /// theta sits on an end of the search interval: the data prefer no interior exponent
  bool theta_at_bound = false;
};
/// theta is searched in [1e-4, 1 - 1e-4].
EnvelopeFit fit_envelope(const std::vector<double>& D, const std::vector<double>& err, double M);

struct StabilityTable {
  ReconMode mode = ReconMode::Global;
  DerivMode deriv = DerivMode::Clean;
  std::vector<StabilityRow> rows;
  /// Global: errors measured against the noise-free reconstruction with the same
  /// regularization. Local: errors measured against the true coefficients on Omega_{5 eps}.
  std::string error_reference;
  LineFit slope_total, slope_nu, slope_kappa;  ///< global mode
  EnvelopeFit envelope;                        ///< local mode
  double M = 0.0;
};

/// One reconstruction per (sigma, seed) plus a reference. Deterministic given the seeds.
StabilityTable stability_experiment(const ReconContext& ctx, const Scenario& sc,
                                    const StabilityParams& p);

/// Columns: kind,mode,sigma,seed,D_value,err_nu_H1,err_kappa_H1,iterations,reg,deriv,
/// converged,slope,slope_stderr,theta,theta_stderr,C,M,theta_at_bound. One "fit" row
/// closes the table.
void write_stability_csv(const std::string& path, const StabilityTable& t,
                         const std::vector<std::string>& header_comments);

}  // namespace cmhd

#endif  // CMHD_STABILITY_HPP

/// @file weights.hpp
/// @brief Distance function, time profile, singular and regular Carleman weights,
///        level sets, cutoffs and the coefficient assumption checks.
#ifndef CMHD_WEIGHTS_HPP
#define CMHD_WEIGHTS_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmhd/grid.hpp"

namespace cmhd {

struct DistanceFunction {
  Scalar d;
  Vec3 grad;
  double sup = 0.0;  ///< max of d over the closed domain
};

/// Default: d = z (requires Gamma = every face but z = 0). A custom d is sampled
/// and its invariants are checked on the grid.
DistanceFunction build_distance_d(const GridPtr& g, const BoundaryPartition& bp,
                                  const ScalarFn* custom = nullptr);

struct TimeProfile {
  double t0 = 0.5, T = 1.0, delta = 0.5, peak = 0.5;
  std::vector<double> l;   ///< samples on the time grid
  std::vector<double> dl;  ///< derivative samples
  double eval(double t) const;
  double deriv(double t) const;
};

/// Linear ramps of slope one at both ends, cubic Hermite blends towards the peak at t0.
TimeProfile build_time_profile(double t0, double T, const Grid& g,
                               std::optional<double> peak = std::nullopt);

/// phi = e^{lambda d} / l(t), alpha = (e^{lambda d} - e^{2 lambda |d|}) / l(t).
struct SingularWeight {
  double lambda = 1.0, s = 1.0;
  GridPtr g;
  Scalar ld;  ///< lambda * d
  double dsup = 1.0;
  TimeProfile prof;
  ScalarSeries log_weight;  ///< 2 s alpha, -inf where l = 0

  Scalar alpha(double t) const;
  Scalar log_phi(double t) const;
  Scalar log_weight_at(double t) const;
  ScalarSeries log_phi_series() const;
};

SingularWeight build_singular_weight(const DistanceFunction& d, const TimeProfile& l,
                                     double lambda, double s);

/// psi = d - beta (t - t0)^2 + c0, phi = e^{lambda psi}, weight e^{2 s phi}.
struct RegularWeight {
  double lambda = 1.0, s = 1.0, beta = 4.0, c0 = 1.0, t0 = 0.5, T = 1.0, margin = 0.1;
  GridPtr g;
  Scalar d;
  ScalarSeries log_weight;  ///< 2 s phi

  Scalar psi(double t) const;
  Scalar log_phi(double t) const;  ///< lambda psi
  Scalar log_weight_at(double t) const;
  ScalarSeries psi_series() const;
  ScalarSeries log_phi_series() const;
};

RegularWeight build_regular_weight(const DistanceFunction& d, double t0, double T,
                                   double lambda, double s, double beta_margin);

/// Grid points of the closed domain with d > eps.
Mask omega_eps(const DistanceFunction& d, double eps);
/// Per time slice: points with psi > eps + c0.
std::vector<Mask> q_eps(const RegularWeight& w, double eps);

struct LevelSetReport {
  double eps = 0.0, delta_eps = 0.0;
  bool inside_slab = false;        ///< Q_eps within Omega_eps x (0,T)
  bool contains_t0_slice = false;  ///< Omega_eps x {t0} within Q_eps
  bool away_from_ends = false;     ///< closure of Q_eps misses t = 0 and t = T
  bool backward_strip = false;     ///< Omega_3eps x (t0 - delta_eps, t0) within Q_2eps
  bool all() const { return inside_slab && contains_t0_slice && away_from_ends && backward_strip; }
};

LevelSetReport check_level_sets(const DistanceFunction& d, const RegularWeight& w, double eps);

/// 10 r^3 - 15 r^4 + 6 r^5 clamped to [0, 1], with derivatives.
double smoothstep5(double r);
double smoothstep5_d1(double r);
double smoothstep5_d2(double r);

struct CutoffSet {
  double eps = 0.0, delta_eps = 0.0, t0 = 0.5, c0 = 0.0;
  Scalar chi1;
  Vec3 grad_chi1;
  ScalarSeries chi2;
  VecSeries grad_chi2;
  ScalarSeries dt_chi2;
  std::vector<Ten3> hess_chi2;
  std::vector<double> eta, deta;

  double chi1_of(double dval) const;
  double eta_of(double t) const;
};

CutoffSet build_cutoffs(double eps, const DistanceFunction& d, const RegularWeight& w);

struct AssumptionReport {
  double min_det = 0.0;    ///< min |det E(u1)| over the region
  double min_cross = 0.0;  ///< min |grad d x rot H1| over the region
  double threshold = 1e-6;
  bool pass_det() const { return min_det > threshold; }
  bool pass_cross() const { return min_cross > threshold; }
  bool pass() const { return pass_det() && pass_cross(); }
};

AssumptionReport check_assumptions(const Vec3& u1_t0, const Vec3& H1_t0,
                                   const DistanceFunction& d, const Mask& region,
                                   double threshold = 1e-6);

}  // namespace cmhd

#endif  // CMHD_WEIGHTS_HPP

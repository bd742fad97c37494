/// @file carleman.hpp
/// @brief Left and right sides of the Carleman inequalities as log-scaled weighted
///        integrals, per (s, lambda) cell, plus sweeps and CSV reports.
#ifndef CMHD_CARLEMAN_HPP
#define CMHD_CARLEMAN_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cmhd/grid.hpp"
#include "cmhd/mhd_systems.hpp"
#include "cmhd/weights.hpp"

namespace cmhd {

struct Term {
  std::string name;
  LogValue value;
};

struct CarlemanRow {
  std::string estimate_id;
  double s = 0.0, lambda = 0.0;
  int n = 0;
  std::vector<Term> lhs, rhs_interior, rhs_boundary;
  LogValue lhs_total, rhs_interior_total, rhs_boundary_total;
  /// log(lhs / (rhs_interior + rhs_boundary)); boundary excluded in regular mode
  double log_ratio = 0.0;
  double log_ratio_interior = 0.0;
  bool boundary_in_ratio = true;     ///< false when the boundary factor is unknown
  double endpoint_fraction = 0.0;    ///< share of the LHS on slices 1 and nt-1
  double endpoint_weight_fraction = 0.0;  ///< same share for the bare weight
  std::size_t region_points = 0, boundary_points = 0;
  std::string status = "ok";         ///< ok, degenerate, failed: ...

  double ratio() const;
  double ratio_interior() const;
};

enum class WeightMode { Singular, Regular };

/// Time-dependent weight for one (s, lambda): 2 s alpha or 2 s phi, and log phi.
struct WeightView {
  WeightMode mode = WeightMode::Singular;
  double s = 1.0, lambda = 1.0;
  ScalarSeries log_weight, log_phi;
};

struct WeightSetup {
  GridPtr g;
  DistanceFunction d;
  double t0 = 0.5;
  double beta_margin = 0.1;
  double eps = 0.125;
  BoundaryPartition bp;
};

WeightView make_weight_view(const WeightSetup& ws, WeightMode mode, double s, double lambda);

/// Squared densities entering the chi_s / sigma_s norms (independent of s, lambda).
struct EnergyDensities {
  ScalarSeries dt_u, d2_u, grad_u, u, grad_p, p, dt_H, d2_H, grad_H, H;
};
/// The pressure is taken as given; its boundary trace belongs on the right side.
EnergyDensities energy_densities(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                 double dt);
std::vector<Term> energy_terms(const EnergyDensities& e, const WeightView& w);

/// Named breakdown of the chi_s (singular) or sigma_s (regular) norm.
struct EnergyNorm {
  std::vector<Term> terms;
  LogValue total;
};
EnergyNorm weighted_energy_norm(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                const WeightView& w);

// ---------------------------------------------------------------- estimate cases

struct EllipticCase {
  Scalar y, f0;
  Vec3 fj;
  Vec3 b;  ///< first-order coefficients of the elliptic operator
};
struct ParabolicCase {
  ScalarSeries y, f;
  WeightMode mode = WeightMode::Singular;
};
struct MhdCase {
  VecSeries u, H;
  ScalarSeries p;
  VecSeries F, G;
  ScalarSeries h;  ///< div u source (regular mode)
  WeightMode mode = WeightMode::Singular;
};
enum class FirstOrderKind { P, Q };
enum class FirstOrderWeight { Volume, T0Singular, T0Regular };
struct FirstOrderCase {
  FirstOrderKind kind = FirstOrderKind::P;
  FirstOrderWeight weight = FirstOrderWeight::Volume;
  Scalar f;   ///< f for P, g for Q
  Ten3 A;     ///< P coefficient
  Vec3 b;     ///< Q coefficient
  Box region;
  std::array<bool, 6> boundary_faces{};
};

/// Precomputed fields for one estimate; cheap to evaluate for many (s, lambda).
class Estimate {
 public:
  virtual ~Estimate() = default;
  virtual std::string id() const = 0;
  virtual CarlemanRow evaluate(const WeightSetup& ws, double s, double lambda) const = 0;
};

std::unique_ptr<Estimate> make_elliptic(const std::string& id, const EllipticCase& c);
std::unique_ptr<Estimate> make_parabolic(const std::string& id, const ParabolicCase& c,
                                         const WeightSetup& ws);
std::unique_ptr<Estimate> make_mhd(const std::string& id, const MhdCase& c,
                                   const LinearizedCoeffs& coeffs, const WeightSetup& ws,
                                   double tol = 1e-8);
std::unique_ptr<Estimate> make_first_order(const std::string& id, const FirstOrderCase& c,
                                           const WeightSetup& ws, double threshold = 1e-6);

/// Known estimate ids with their default scenarios.
std::vector<std::string> known_estimates();
std::unique_ptr<Estimate> default_estimate(const std::string& id, const WeightSetup& ws);
WeightSetup default_weight_setup(const GridSpec& spec, double t0, double beta_margin, double eps);

// ---------------------------------------------------------------- sweeps

struct SweepSummary {
  struct PerLambda {
    double lambda = 0.0, max_ratio = 0.0, min_ratio = 0.0, spread = 0.0;
    bool all_finite = true;
  };
  std::vector<PerLambda> per_lambda;
  double max_ratio = 0.0, max_spread = 0.0;
  double spread_threshold = 3.0;
  double max_endpoint_fraction = 0.0;        ///< over rows with s >= endpoint_s
  double max_endpoint_weight_fraction = 0.0;
  double endpoint_s = 8.0;
  bool all_finite = true;
  bool spread_ok() const { return all_finite && max_spread <= spread_threshold; }
};

struct CarlemanReport {
  std::string estimate_id;
  std::vector<CarlemanRow> rows;  ///< sorted by (lambda, s)
  SweepSummary summary;
};

struct SweepParams {
  std::vector<double> s_list{2, 4, 8, 16};
  std::vector<double> lambda_list{1, 2, 3};
  double spread_threshold = 3.0;
  double endpoint_s = 8.0;
  int threads = 1;
};

CarlemanReport sweep(const Estimate& est, const WeightSetup& ws, const SweepParams& p);

/// Stable column set: estimate_id,s,lambda,n, term value/log pairs, totals, ratios, status.
void write_report_csv(const std::string& path, const CarlemanReport& r,
                      const std::vector<std::string>& header_comments);

}  // namespace cmhd

#endif  // CMHD_CARLEMAN_HPP

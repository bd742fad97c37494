/// @file inverse.hpp
/// @brief First-order operators P and Q, data-driven right-hand sides at the observation
///        time, weighted least-squares reconstruction of the coefficient differences,
///        the measurement norm and the prior bound.
#ifndef CMHD_INVERSE_HPP
#define CMHD_INVERSE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cmhd/grid.hpp"
#include "cmhd/linalg.hpp"
#include "cmhd/mhd_systems.hpp"
#include "cmhd/weights.hpp"

namespace cmhd {

// ---------------------------------------------------------------- operators

/// P f = A grad f + f div A (row divergence).
Vec3 apply_P(const Scalar& f, const Ten3& A);
/// Q g = grad g x b + g rot b.
Vec3 apply_Q(const Scalar& g, const Vec3& b);
/// Q_k g = d_k(Q g) - grad g x d_k b - g rot(d_k b).
Vec3 apply_Qk(const Scalar& g, const Vec3& b, int k);

/// Rows M grad x + c x (3 per listed point) as a matrix-free operator on grid scalars.
LinearOperator first_order_operator(const Ten3& M, const Vec3& c, const std::vector<std::size_t>& rows);
/// Gradient of every component of a first-order block (9 rows per listed point).
LinearOperator gradient_of_first_order(const Ten3& M, const Vec3& c,
                                       const std::vector<std::size_t>& rows);
/// x restricted to the listed points.
LinearOperator point_selection(const GridPtr& g, const std::vector<std::size_t>& rows);
/// grad x restricted to the listed points (3 rows per point).
LinearOperator gradient_selection(const GridPtr& g, const std::vector<std::size_t>& rows);

// ---------------------------------------------------------------- observations

/// Difference data u1 - u2, H1 - H2, p1 - p2 as seen by the experiment.
struct ObservationData {
  GridPtr g;
  int m0 = 0;  ///< index of the observation time
  VecSeries u, H;
  ScalarSeries p;
  Vec3 ut0, Ht0;  ///< supplied time derivatives at the observation time
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Clean data from a scenario; sigma > 0 adds Gaussian noise of standard deviation
/// sigma * rms(field) independently per point, component and slice.
ObservationData observe(const Scenario& sc, double sigma, std::uint64_t seed);
/// obs_a - obs_b, field by field.
ObservationData observation_difference(const ObservationData& a, const ObservationData& b);
/// Copy with NaN written wherever keep is zero (every slice). Used to prove locality.
ObservationData poison_outside(const ObservationData& obs, const Mask& keep);

enum class DerivMode { Clean, Realistic };
std::string to_string(DerivMode m);
std::string to_string(DiffusionForm f);

struct MeasuredRhs {
  Vec3 F;      ///< approximates P nu with A = 2 E(u1)
  Vec3 G;      ///< approximates -Q kappa with b = rot H1
  Ten3 gradG;  ///< (i, j) = d_j G_i
  DerivMode mode = DerivMode::Clean;
  DiffusionForm form = DiffusionForm::Conservative;
};

/// Difference equations at the observation time solved for their coefficient sources.
/// Clean mode reads the supplied time derivatives; realistic mode differentiates the
/// (possibly noisy) series.
MeasuredRhs assemble_rhs_from_data(const ObservationData& obs, const Background& bg,
                                   DerivMode mode,
                                   DiffusionForm form = DiffusionForm::Conservative);

// ---------------------------------------------------------------- reconstruction

enum class ReconMode { Global, Local };
enum class Weighting { Carleman, Uniform };
std::string to_string(ReconMode m);
std::string to_string(Weighting w);

struct ReconParams {
  ReconMode mode = ReconMode::Global;
  Weighting weighting = Weighting::Carleman;
  DerivMode deriv = DerivMode::Clean;
  DiffusionForm diffusion = DiffusionForm::Conservative;
  double s = 1.0, lambda = 1.0;  ///< weight parameters at the observation time
  double eps = 0.125;            ///< local mode level-set parameter
  double beta_margin = 0.1;
  double rho_gamma_factor = 1e3;  ///< boundary penalty = factor * mean data-row norm
  double rho_reg_factor = 0.0;    ///< Tikhonov weight on |grad x|^2 = factor * mean data-row norm
  bool grad_q_block = true;
  double tol = 1e-10;
  int max_iter = 20000;
};

/// Geometry shared by every reconstruction.
struct ReconContext {
  GridPtr g;
  BoundaryPartition bp;
  DistanceFunction d;
  double t0 = 0.5;
};

struct FieldReconstruction {
  /// nu or kappa. Local mode holds chi1 times the coefficient and NaN outside report_mask.
  Scalar estimate;
  Mask report_mask;    ///< whole domain (global) or Omega_{5 eps} (local)
  double err_H1 = -1.0, rel_err_H1 = -1.0;  ///< negative when no truth was supplied
  double residual_norm = 0.0;  ///< |P nu - F| or |Q kappa + G| over the data rows
  double rho_gamma = 0.0, rho_reg = 0.0;  ///< weights actually used
  std::size_t data_rows = 0;
  SolveStats stats;
};

struct ReconstructionResult {
  FieldReconstruction nu, kappa;
  double D = 0.0;
  ReconParams params;
};

/// Data points used by local mode: Omega_{3 eps} intersected with the points where the
/// assembled data are finite.
FieldReconstruction reconstruct_nu(const ReconContext& ctx, const MeasuredRhs& rhs,
                                   const Vec3& u1_t0, const Scalar& nu_boundary,
                                   const ReconParams& prm, const Scalar* truth = nullptr);
FieldReconstruction reconstruct_kappa(const ReconContext& ctx, const MeasuredRhs& rhs,
                                      const Vec3& H1_t0, const Scalar& kappa_boundary,
                                      const ReconParams& prm, const Scalar* truth = nullptr);

/// Normal-equation data for the dense oracle: same operator, rhs and options.
struct LsqProblem {
  LinearOperator op;
  Vector rhs;
  SolveOptions opt;
  LinearOperator reg;
  bool has_reg = false;
};
LsqProblem build_nu_problem(const ReconContext& ctx, const MeasuredRhs& rhs, const Vec3& u1_t0,
                            const Scalar& nu_boundary, const ReconParams& prm);
LsqProblem build_kappa_problem(const ReconContext& ctx, const MeasuredRhs& rhs,
                               const Vec3& H1_t0, const Scalar& kappa_boundary,
                               const ReconParams& prm);

/// Omega_{3 eps} plus the Gamma points: everything local mode may read.
Mask local_data_mask(const ReconContext& ctx, double eps);

/// Both coefficients plus the measurement norm, for a scenario and an observation.
/// Local mode writes NaN into the observation outside local_data_mask before assembly,
/// so rows whose stencils leave that set drop out.
ReconstructionResult reconstruct(const ReconContext& ctx, const Scenario& sc,
                                 const ObservationData& obs, const ReconParams& prm);

ReconContext make_context(const GridPtr& g, const BoundaryPartition& bp,
                          const DistanceFunction& d, double t0);

// ---------------------------------------------------------------- norms

struct NormTerm {
  std::string name;
  double value = 0.0;
};
struct MeasurementNorm {
  double value = 0.0;
  std::vector<NormTerm> terms;
};
/// Global: Omega and the whole lateral boundary. Local: Omega_{3 eps} and Gamma.
MeasurementNorm measurement_norm_D(const ObservationData& obs, ReconMode mode,
                                   const DistanceFunction& d, const BoundaryPartition& bp,
                                   double eps);
double prior_bound_M(const DifferencePack& pack, const Scalar& nu, const Scalar& kappa,
                     const DistanceFunction& d, double eps);

}  // namespace cmhd

#endif  // CMHD_INVERSE_HPP

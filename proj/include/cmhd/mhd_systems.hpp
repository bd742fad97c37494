/// @file mhd_systems.hpp
/// @brief Residuals of the nonlinear, linearized, difference and cutoff MHD systems,
///        plus the manufactured-solution factory.
#ifndef CMHD_MHD_SYSTEMS_HPP
#define CMHD_MHD_SYSTEMS_HPP

#include <optional>
#include <string>
#include <vector>

#include "cmhd/grid.hpp"
#include "cmhd/weights.hpp"

namespace cmhd {

/// (u, p, H) on the space-time grid with coefficients and body forcings.
struct MhdState {
  GridPtr g;
  VecSeries u, H;
  ScalarSeries p;
  Scalar nu, kappa;
  VecSeries F_ext, G_ext;  ///< empty means zero forcing
};

struct ResidualSet {
  VecSeries momentum, induction;
  ScalarSeries div_u, div_H;

  double max_momentum() const;
  double max_induction() const;
  double max_div_u() const;
  double max_div_H() const;
  /// max over momentum and induction (the div constraints are reported separately)
  double max_abs() const;
};

/// Full nonlinear residual minus the external forcings.
ResidualSet residual_mhd(const MhdState& s);

/// Coefficients of the linearized system. Empty series are read as zero.
struct LinearizedCoeffs {
  ScalarSeries nu, kappa;
  VecSeries B1, B2, B3;
  VecSeries C1, C2, C3, C4, C5;
  VecSeries D1, D2, D3;
};

/// Linearized residual; div_u reports div u - h (h empty means zero).
ResidualSet residual_linearized(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                                const LinearizedCoeffs& c, const VecSeries& F,
                                const VecSeries& G, const ScalarSeries& h);

/// Differences u1 - u2 etc. with their first and second time derivatives.
struct DifferencePack {
  VecSeries u, H;
  ScalarSeries p;
  Scalar nu, kappa;
  VecSeries w1, h1, w2, h2;  ///< d_t and d_t^2 of u and H
  ScalarSeries q1, q2;       ///< d_t and d_t^2 of p
};

DifferencePack make_difference_pack(const MhdState& s1, const MhdState& s2);

/// Residual of the difference system of the given time-differentiation order (0, 1, 2):
/// its left side minus the coefficient sources and the forcing differences.
ResidualSet residual_difference(const DifferencePack& pack, const MhdState& s1,
                                const MhdState& s2, int order);

/// Left side of the order-0 difference system applied to an arbitrary triple.
struct DifferenceLhs {
  VecSeries momentum, induction;
};
DifferenceLhs difference_lhs(const VecSeries& u, const ScalarSeries& p, const VecSeries& H,
                             const MhdState& s1, const MhdState& s2);

/// Known background quantities at one time slice.
struct Background {
  Vec3 u1, u2, H1, H2;
  Scalar nu2, kappa2;
  Vec3 dF, dG;  ///< forcing differences F1 - F2, G1 - G2
};
Background background_at(const MhdState& s1, const MhdState& s2, int m);

struct DifferenceSlice {
  Vec3 momentum, induction;
};
/// Expanded: nu2 lap u plus gradient terms (valid for solenoidal u, H).
/// Conservative: div(2 nu2 E(u)) and rot(kappa2 rot H), the forms of the forward system.
enum class DiffusionForm { Expanded, Conservative };

/// Order-0 difference left side at one slice with supplied time derivatives.
DifferenceSlice difference_lhs_slice(const Vec3& ut, const Vec3& u, const Scalar& p,
                                     const Vec3& Ht, const Vec3& H, const Background& bg,
                                     DiffusionForm form = DiffusionForm::Expanded);

/// The sources that carry the coefficient differences:
/// div(2 nu E(u1)) and -rot(kappa rot H1), per slice.
struct CoefficientSources {
  VecSeries momentum, induction;
};
CoefficientSources coefficient_sources(const Scalar& nu, const Scalar& kappa, const MhdState& s1);

struct CutoffRewrite {
  ResidualSet residual;        ///< residual of the system for chi2 (u, p, H)
  VecSeries commutator_u;      ///< L(chi2 u) - chi2 L(u), momentum part
  VecSeries commutator_H;      ///< induction part
};

CutoffRewrite rewrite_with_cutoff(const DifferencePack& pack, const MhdState& s1,
                                  const MhdState& s2, const ScalarSeries& chi2);

// ---------------------------------------------------------------- manufacturing

struct ScenarioRecipe {
  std::string name = "default";  ///< "default", "a1_fail", "a2_fail"
  double t0 = 0.5;
  double diff_scale = 1.0;       ///< multiplies every difference field
  bool envelope = true;          ///< differences vanish at t = 0 and t = T
};

struct Scenario {
  MhdState s1, s2;
  DifferencePack pack;
  Scalar nu_true, kappa_true;    ///< nu1 - nu2 and kappa1 - kappa2
  AssumptionReport assumptions;  ///< on the closed domain
  ScenarioRecipe recipe;
};

std::vector<std::string> known_recipes();

/// Builds two forced states from closed forms. Throws NumericalError when the
/// assumptions fail for the recipe on the closed domain.
Scenario manufacture_scenario(const GridPtr& g, const DistanceFunction& d,
                              const ScenarioRecipe& recipe);

/// Closed-form background velocity and magnetic field of a recipe at time t.
Vec3 recipe_u1(const GridPtr& g, const ScenarioRecipe& r, double t);
Vec3 recipe_H1(const GridPtr& g, const ScenarioRecipe& r, double t);

/// Discrete forcings making the state an exact solution of the forced system.
void attach_forcings(MhdState& s);

}  // namespace cmhd

#endif  // CMHD_MHD_SYSTEMS_HPP

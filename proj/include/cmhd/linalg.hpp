/// @file linalg.hpp
/// @brief Matrix-free weighted least squares on the normal equations.
#ifndef CMHD_LINALG_HPP
#define CMHD_LINALG_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace cmhd {

using Vector = Eigen::VectorXd;

/// y = A x and x = A^T y. The row weights W enter the objective |W^{1/2}(Ax - b)|^2.
struct LinearOperator {
  std::size_t n_in = 0, n_out = 0;
  std::function<void(const Vector&, Vector&)> forward;
  std::function<void(const Vector&, Vector&)> adjoint;
  Vector row_weight;  ///< empty means all ones
  /// Optional: diag += sum_r w_r a_rj^2 for the given row weights (empty means ones).
  /// Enables the Jacobi scaling in lsq_solve.
  std::function<void(const Vector&, Vector&)> normal_diag;

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& y) const;
};

LinearOperator identity_operator(std::size_t n);
/// Stacks blocks vertically; every block shares the domain.
LinearOperator stack(const std::vector<LinearOperator>& blocks);

/// Sum in fixed blocks so the result does not depend on scheduling.
double det_dot(const Vector& a, const Vector& b);
double det_norm(const Vector& a);

/// max over random pairs of |<Ax, y> - <x, A^T y>| / (|Ax| |y|).
double dot_test(const LinearOperator& op, int trials, std::uint64_t seed);

struct SolveStats {
  int iterations = 0;
  double normal_residual = 0.0;      ///< |A^T W (b - Ax) - rho R x|
  double rel_normal_residual = 0.0;  ///< divided by |A^T W b| (or 1 when that is zero)
  double objective = 0.0;
  bool converged = false;
  /// Residual norm of the (diagonally scaled) system per iteration, starting at x0.
  /// Conjugate residuals minimize this norm, so the sequence is nonincreasing.
  std::vector<double> history;
};

struct SolveOptions {
  double rho = 0.0;
  double tol = 1e-10;
  int max_iter = 2000;
  const LinearOperator* reg = nullptr;  ///< R = L^T L; identity when null
  bool jacobi = true;  ///< symmetric diagonal scaling when the operators expose their diagonal
};

/// Diagonal of A^T W A + rho R, or an empty vector when some operator cannot supply it.
Vector normal_diagonal(const LinearOperator& op, const SolveOptions& opt);

/// Conjugate residual iteration on (A^T W A + rho R) x = A^T W b. The stopping test is
/// on the unscaled normal residual relative to |A^T W b|.
Vector lsq_solve(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt,
                 SolveStats& stats, const Vector* x0 = nullptr);

/// Normal-equation residual of x for the same problem.
double normal_residual(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt,
                       const Vector& x);

/// Column-by-column materialization, for small problems only.
Eigen::MatrixXd to_dense(const LinearOperator& op);
/// Direct solve of the same regularized weighted problem.
Vector dense_lsq_solve(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt);

}  // namespace cmhd

#endif  // CMHD_LINALG_HPP

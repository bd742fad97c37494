#include <doctest.h>

#include <cmath>
#include <random>

#include "cmhd/linalg.hpp"

using namespace cmhd;

namespace {

/// Dense matrix wrapped as an operator, with its diagonal for Jacobi scaling.
LinearOperator dense_operator(const Eigen::MatrixXd& M) {
  LinearOperator op;
  op.n_in = static_cast<std::size_t>(M.cols());
  op.n_out = static_cast<std::size_t>(M.rows());
  op.forward = [M](const Vector& x, Vector& y) { y = M * x; };
  op.adjoint = [M](const Vector& y, Vector& x) { x = M.transpose() * y; };
  op.normal_diag = [M](const Vector& w, Vector& d) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
      for (Eigen::Index i = 0; i < M.rows(); ++i)
        d[j] += (w.size() ? w[i] : 1.0) * M(i, j) * M(i, j);
  };
  return op;
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = N(rng);
  return M;
}

Vector random_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = N(rng);
  return v;
}

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("dot test") {
  CHECK(dot_test(identity_operator(50), 5, 1) <= 1e-15);
  const LinearOperator op = dense_operator(random_matrix(30, 12, 2));
  CHECK(dot_test(op, 5, 1) <= 1e-14);
  LinearOperator wrong = op;
  const Eigen::MatrixXd B = random_matrix(30, 12, 3);
  wrong.adjoint = [B](const Vector& y, Vector& x) { x = B.transpose() * y; };
  CHECK(dot_test(wrong, 5, 1) > 1e-3);
}

TEST_CASE("identity system converges in one step") {
  const LinearOperator I = identity_operator(40);
  const Vector b = random_vector(40, 4);
  SolveStats st;
  const Vector x = lsq_solve(I, b, SolveOptions{}, st);
  CHECK(st.converged);
  CHECK(st.iterations == 1);
  CHECK((x - b).norm() <= 1e-12 * b.norm());
}

TEST_CASE("heavy regularization drives the solution to zero") {
  const LinearOperator op = dense_operator(random_matrix(40, 20, 5));
  const Vector b = random_vector(40, 6);
  double prev = std::numeric_limits<double>::infinity();
  for (double rho : {1e2, 1e4, 1e8}) {
    SolveOptions o;
    o.rho = rho;
    SolveStats st;
    const double nx = lsq_solve(op, b, o, st).norm();
    CHECK(st.converged);
    CHECK(nx < prev);
    prev = nx;
  }
  CHECK(prev <= 1e-6);
}

TEST_CASE("normal equations, history and the dense oracle") {
  const Eigen::MatrixXd M = random_matrix(60, 25, 7);
  LinearOperator op = dense_operator(M);
  op.row_weight = (random_vector(60, 8).array().abs() + 0.5).matrix();
  const Vector b = random_vector(60, 9);
  SolveOptions o;
  o.rho = 0.3;
  o.tol = 1e-13;
  const LinearOperator reg = dense_operator(random_matrix(25, 25, 10));
  o.reg = &reg;
  SolveStats st;
  const Vector x = lsq_solve(op, b, o, st);
  REQUIRE(st.converged);
  CHECK(normal_residual(op, b, o, x) <= 1e-12 * (M.transpose() * op.row_weight.asDiagonal() * b).norm());

  // oracle from the explicit normal matrix
  const Eigen::MatrixXd L = to_dense(reg);
  const Eigen::MatrixXd N =
      M.transpose() * op.row_weight.asDiagonal() * M + o.rho * L.transpose() * L;
  const Vector xd = N.ldlt().solve(M.transpose() * op.row_weight.asDiagonal() * b);
  CHECK((x - xd).norm() <= 1e-10 * xd.norm());
  CHECK((dense_lsq_solve(op, b, o) - xd).norm() <= 1e-10 * xd.norm());

  REQUIRE(st.history.size() >= 2);
  for (std::size_t i = 1; i < st.history.size(); ++i)
    CHECK(st.history[i] <= st.history[i - 1] * (1.0 + 1e-12));

  SolveOptions plain = o;
  plain.jacobi = false;
  SolveStats st2;
  const Vector x2 = lsq_solve(op, b, plain, st2);
  CHECK(st2.converged);
  CHECK((x2 - xd).norm() <= 1e-10 * xd.norm());
}

TEST_CASE("solves are deterministic") {
  const LinearOperator op = dense_operator(random_matrix(50, 30, 11));
  const Vector b = random_vector(50, 12);
  SolveStats a, c;
  const Vector xa = lsq_solve(op, b, SolveOptions{}, a);
  const Vector xc = lsq_solve(op, b, SolveOptions{}, c);
  CHECK(a.iterations == c.iterations);
  CHECK((xa - xc).norm() == 0.0);
  CHECK(det_dot(b, b) == doctest::Approx(b.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("stacked blocks") {
  const Eigen::MatrixXd A = random_matrix(10, 6, 13), B = random_matrix(7, 6, 14);
  const LinearOperator s = stack({dense_operator(A), dense_operator(B)});
  CHECK(s.n_out == 17);
  Eigen::MatrixXd AB(17, 6);
  AB << A, B;
  CHECK((to_dense(s) - AB).norm() <= 1e-14);
  CHECK(dot_test(s, 3, 2) <= 1e-14);
}

TEST_CASE("iteration cap reports non-convergence") {
  const LinearOperator op = dense_operator(random_matrix(80, 40, 15));
  SolveOptions o;
  o.max_iter = 2;
  SolveStats st;
  lsq_solve(op, random_vector(80, 16), o, st);
  CHECK_FALSE(st.converged);
  CHECK(st.iterations == 2);
}

}  // TEST_SUITE

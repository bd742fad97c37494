#include "cmhd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cmhd/grid.hpp"

namespace cmhd {

namespace {
constexpr Eigen::Index kBlock = 4096;

Vector weighted(const LinearOperator& op, const Vector& y) {
  if (op.row_weight.size() == 0) return y;
  return op.row_weight.cwiseProduct(y);
}

void check_sizes(const LinearOperator& op) {
  if (!op.forward || !op.adjoint) throw PreconditionError("linear operator: missing map");
  if (op.row_weight.size() != 0 && static_cast<std::size_t>(op.row_weight.size()) != op.n_out)
    throw PreconditionError("linear operator: row weight size mismatch");
}

// N x = A^T W A x + rho R x
Vector normal_apply(const LinearOperator& op, const SolveOptions& opt, const Vector& x) {
  Vector y = op.apply_adjoint(weighted(op, op.apply(x)));
  if (opt.rho > 0.0) {
    if (opt.reg)
      y += opt.rho * opt.reg->apply_adjoint(opt.reg->apply(x));
    else
      y += opt.rho * x;
  }
  return y;
}

double objective(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt,
                 const Vector& x) {
  Vector r = op.apply(x) - rhs;
  double v = det_dot(r, weighted(op, r));
  if (opt.rho > 0.0) {
    if (opt.reg) {
      Vector lx = opt.reg->apply(x);
      v += opt.rho * det_dot(lx, lx);
    } else {
      v += opt.rho * det_dot(x, x);
    }
  }
  return v;
}
}  // namespace

Vector LinearOperator::apply(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != n_in)
    throw PreconditionError("linear operator: input size mismatch");
  Vector y = Vector::Zero(static_cast<Eigen::Index>(n_out));
  forward(x, y);
  return y;
}

Vector LinearOperator::apply_adjoint(const Vector& y) const {
  if (static_cast<std::size_t>(y.size()) != n_out)
    throw PreconditionError("linear operator: adjoint input size mismatch");
  Vector x = Vector::Zero(static_cast<Eigen::Index>(n_in));
  adjoint(y, x);
  return x;
}

LinearOperator identity_operator(std::size_t n) {
  LinearOperator op;
  op.n_in = op.n_out = n;
  op.forward = [](const Vector& x, Vector& y) { y = x; };
  op.adjoint = [](const Vector& y, Vector& x) { x = y; };
  op.normal_diag = [](const Vector& w, Vector& d) {
    if (w.size() == 0)
      d.array() += 1.0;
    else
      d += w;
  };
  return op;
}

LinearOperator stack(const std::vector<LinearOperator>& blocks) {
  if (blocks.empty()) throw PreconditionError("stack: no blocks");
  LinearOperator op;
  op.n_in = blocks[0].n_in;
  std::vector<std::size_t> offs;
  bool any_w = false;
  for (const auto& b : blocks) {
    if (b.n_in != op.n_in) throw PreconditionError("stack: domain mismatch");
    offs.push_back(op.n_out);
    op.n_out += b.n_out;
    any_w = any_w || b.row_weight.size() != 0;
  }
  if (any_w) {
    op.row_weight = Vector::Ones(static_cast<Eigen::Index>(op.n_out));
    for (std::size_t k = 0; k < blocks.size(); ++k)
      if (blocks[k].row_weight.size() != 0)
        op.row_weight.segment(static_cast<Eigen::Index>(offs[k]),
                              static_cast<Eigen::Index>(blocks[k].n_out)) = blocks[k].row_weight;
  }
  op.forward = [blocks, offs](const Vector& x, Vector& y) {
    for (std::size_t k = 0; k < blocks.size(); ++k)
      y.segment(static_cast<Eigen::Index>(offs[k]), static_cast<Eigen::Index>(blocks[k].n_out)) =
          blocks[k].apply(x);
  };
  bool all_diag = true;
  for (const auto& b : blocks) all_diag = all_diag && static_cast<bool>(b.normal_diag);
  if (all_diag)
    op.normal_diag = [blocks, offs](const Vector& w, Vector& d) {
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto o = static_cast<Eigen::Index>(offs[k]);
        const auto n = static_cast<Eigen::Index>(blocks[k].n_out);
        // the stacked weight already holds every block's own weight
        blocks[k].normal_diag(w.size() ? Vector(w.segment(o, n)) : Vector(), d);
      }
    };
  op.adjoint = [blocks, offs](const Vector& y, Vector& x) {
    x.setZero();
    for (std::size_t k = 0; k < blocks.size(); ++k)
      x += blocks[k].apply_adjoint(
          y.segment(static_cast<Eigen::Index>(offs[k]), static_cast<Eigen::Index>(blocks[k].n_out)));
  };
  return op;
}

double det_dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw PreconditionError("det_dot: size mismatch");
  const Eigen::Index n = a.size();
  std::vector<double> partial;
  for (Eigen::Index s = 0; s < n; s += kBlock) {
    const Eigen::Index len = std::min(kBlock, n - s);
    double acc = 0.0;
    for (Eigen::Index i = s; i < s + len; ++i) acc += a[i] * b[i];
    partial.push_back(acc);
  }
  // pairwise in a fixed tree
  while (partial.size() > 1) {
    std::vector<double> next;
    for (std::size_t i = 0; i < partial.size(); i += 2)
      next.push_back(i + 1 < partial.size() ? partial[i] + partial[i + 1] : partial[i]);
    partial.swap(next);
  }
  return partial.empty() ? 0.0 : partial[0];
}

double det_norm(const Vector& a) { return std::sqrt(det_dot(a, a)); }

double dot_test(const LinearOperator& op, int trials, std::uint64_t seed) {
  if (trials < 1) throw PreconditionError("dot_test: trials must be >= 1");
  check_sizes(op);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Vector x(static_cast<Eigen::Index>(op.n_in)), y(static_cast<Eigen::Index>(op.n_out));
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    Vector ax = op.apply(x), aty = op.apply_adjoint(y);
    double lhs = det_dot(ax, y), rhs = det_dot(x, aty);
    double scale = det_norm(ax) * det_norm(y);
    if (scale == 0.0) scale = 1.0;
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

Vector normal_diagonal(const LinearOperator& op, const SolveOptions& opt) {
  if (!op.normal_diag) return Vector();
  if (opt.rho > 0.0 && opt.reg && !opt.reg->normal_diag) return Vector();
  Vector d = Vector::Zero(static_cast<Eigen::Index>(op.n_in));
  op.normal_diag(op.row_weight, d);
  if (opt.rho > 0.0) {
    Vector r = Vector::Zero(static_cast<Eigen::Index>(op.n_in));
    if (opt.reg)
      opt.reg->normal_diag(opt.reg->row_weight, r);
    else
      r.setOnes();
    d += opt.rho * r;
  }
  return d;
}

Vector lsq_solve(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt,
                 SolveStats& stats, const Vector* x0) {
  check_sizes(op);
  if (!(opt.tol > 0.0)) throw PreconditionError("lsq_solve: tol must be > 0");
  if (opt.rho < 0.0) throw PreconditionError("lsq_solve: rho must be >= 0");
  if (static_cast<std::size_t>(rhs.size()) != op.n_out)
    throw PreconditionError("lsq_solve: rhs size mismatch");
  stats = SolveStats{};
  const auto n = static_cast<Eigen::Index>(op.n_in);
  // x = S y with S = diag^{-1/2}; the iteration runs on S N S y = S b
  Vector S = Vector::Ones(n);
  if (opt.jacobi) {
    const Vector d = normal_diagonal(op, opt);
    if (d.size() == n)
      for (Eigen::Index j = 0; j < n; ++j) S[j] = d[j] > 0.0 ? 1.0 / std::sqrt(d[j]) : 1.0;
  }
  auto scaled_apply = [&](const Vector& y) -> Vector {
    return S.cwiseProduct(normal_apply(op, opt, S.cwiseProduct(y)));
  };
  const Vector b = op.apply_adjoint(weighted(op, rhs));
  const double bnorm = det_norm(b);
  const double ref = bnorm > 0.0 ? bnorm : 1.0;
  // unscaled residual b - N x = S^{-1} r_y
  auto true_norm = [&](const Vector& ry) { return det_norm(ry.cwiseQuotient(S)); };

  Vector y = x0 ? Vector(x0->cwiseQuotient(S)) : Vector::Zero(n);
  Vector r = S.cwiseProduct(b) - scaled_apply(y);
  double rn = true_norm(r);
  stats.history.push_back(det_norm(r));
  if (rn <= opt.tol * ref) {
    stats.converged = true;
  } else {
    Vector p = r;
    Vector Ar = scaled_apply(r);
    Vector Ap = Ar;
    double rAr = det_dot(r, Ar);
    for (int it = 1; it <= opt.max_iter; ++it) {
      const double ApAp = det_dot(Ap, Ap);
      if (!(ApAp > 0.0) || !(rAr > 0.0)) break;
      const double alpha = rAr / ApAp;
      y += alpha * p;
      r -= alpha * Ap;
      rn = true_norm(r);
      stats.iterations = it;
      stats.history.push_back(det_norm(r));
      if (rn <= opt.tol * ref) {
        stats.converged = true;
        break;
      }
      Ar = scaled_apply(r);
      const double rAr_new = det_dot(r, Ar);
      const double beta = rAr_new / rAr;
      rAr = rAr_new;
      p = r + beta * p;
      Ap = Ar + beta * Ap;
    }
  }
  const Vector x = S.cwiseProduct(y);
  // report the true residual, not the recursively updated one
  stats.normal_residual = normal_residual(op, rhs, opt, x);
  stats.rel_normal_residual = stats.normal_residual / ref;
  stats.objective = objective(op, rhs, opt, x);
  for (double v : x)
    if (!std::isfinite(v)) throw NumericalError("lsq_solve: non-finite iterate");
  return x;
}

double normal_residual(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt,
                       const Vector& x) {
  Vector b = op.apply_adjoint(weighted(op, rhs));
  return det_norm(b - normal_apply(op, opt, x));
}

Eigen::MatrixXd to_dense(const LinearOperator& op) {
  check_sizes(op);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(op.n_out), static_cast<Eigen::Index>(op.n_in));
  Vector e = Vector::Zero(static_cast<Eigen::Index>(op.n_in));
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    e[j] = 1.0;
    A.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return A;
}

Vector dense_lsq_solve(const LinearOperator& op, const Vector& rhs, const SolveOptions& opt) {
  const Eigen::MatrixXd A = to_dense(op);
  Vector sw = op.row_weight.size() ? Vector(op.row_weight.cwiseSqrt())
                                   : Vector::Ones(static_cast<Eigen::Index>(op.n_out));
  Eigen::MatrixXd L;
  if (opt.rho > 0.0)
    L = opt.reg ? to_dense(*opt.reg) : Eigen::MatrixXd::Identity(A.cols(), A.cols());
  // QR of the stacked system [W^{1/2} A; sqrt(rho) L] avoids squaring the condition number
  Eigen::MatrixXd M(A.rows() + L.rows(), A.cols());
  M.topRows(A.rows()) = sw.asDiagonal() * A;
  if (L.rows() > 0) M.bottomRows(L.rows()) = std::sqrt(opt.rho) * L;
  Vector b = Vector::Zero(M.rows());
  b.head(A.rows()) = sw.cwiseProduct(rhs);
  return M.colPivHouseholderQr().solve(b);
}

}  // namespace cmhd

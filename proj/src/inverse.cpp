#include "cmhd/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

namespace cmhd {

// ---------------------------------------------------------------- operators

Vec3 apply_P(const Scalar& f, const Ten3& A) {
  require_same_grid(f, A.c[0], "apply_P");
  return matvec(A, grad(f)) + f * div(A);
}

Vec3 apply_Q(const Scalar& g, const Vec3& b) {
  require_same_grid(g, b[0], "apply_Q");
  return cross(grad(g), b) + g * rot(b);
}

Vec3 apply_Qk(const Scalar& g, const Vec3& b, int k) {
  if (k < 0 || k > 2) throw PreconditionError("apply_Qk: axis must be 0, 1 or 2");
  require_same_grid(g, b[0], "apply_Qk");
  const Vec3 q = apply_Q(g, b);
  Vec3 dq(g.g), db(g.g);
  for (int i = 0; i < 3; ++i) {
    dq[i] = deriv(q[i], k);
    db[i] = deriv(b[i], k);
  }
  return dq - cross(grad(g), db) - g * rot(db);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// First-derivative rows per axis and line index, with the axis stride.
struct Stencils {
  GridPtr g;
  std::array<std::vector<StencilRow>, 3> rows;
  std::array<std::ptrdiff_t, 3> stride{};
  std::vector<std::array<int, 3>> ijk;

  explicit Stencils(GridPtr grid) : g(std::move(grid)) {
    for (int a = 0; a < 3; ++a) {
      for (int i = 0; i <= g->n(a); ++i) rows[a].push_back(d1_row(i, g->n(a), g->h(a)));
      stride[a] = static_cast<std::ptrdiff_t>(g->stride(a));
    }
    ijk.resize(g->npts());
    for (std::size_t p = 0; p < g->npts(); ++p) ijk[p] = g->ijk(p);
  }

  void forward(int a, const double* x, double* y) const {
    const std::size_t n = g->npts();
    for (std::size_t p = 0; p < n; ++p) {
      const StencilRow& r = rows[a][ijk[p][a]];
      const auto q = static_cast<std::ptrdiff_t>(p);
      double acc = 0.0;
      for (int k = 0; k < 4; ++k)
        if (r.w[k] != 0.0) acc += r.w[k] * x[q + r.off[k] * stride[a]];
      y[p] = acc;
    }
  }
  /// x += D_a^T y
  void adjoint_add(int a, const double* y, double* x) const {
    const std::size_t n = g->npts();
    for (std::size_t p = 0; p < n; ++p) {
      const StencilRow& r = rows[a][ijk[p][a]];
      const auto q = static_cast<std::ptrdiff_t>(p);
      for (int k = 0; k < 4; ++k)
        if (r.w[k] != 0.0) x[q + r.off[k] * stride[a]] += r.w[k] * y[p];
    }
  }
};

/// Coefficients of M grad x + c x on the full grid.
struct FirstOrderData {
  std::shared_ptr<const Stencils> st;
  std::array<std::vector<double>, 9> M;
  std::array<std::vector<double>, 3> c;

  FirstOrderData(const Ten3& Mt, const Vec3& ct)
      : st(std::make_shared<Stencils>(Mt.grid())) {
    for (int i = 0; i < 9; ++i) M[i] = Mt.c[i].v;
    for (int i = 0; i < 3; ++i) c[i] = ct[i].v;
  }

  /// Nonzeros of row k of M grad x + c x at point p, appended to out.
  void row_entries(int k, std::size_t p, double scale,
                   std::vector<std::pair<std::ptrdiff_t, double>>& out) const {
    const auto q = static_cast<std::ptrdiff_t>(p);
    double center = c[k][p];
    for (int a = 0; a < 3; ++a) {
      const StencilRow& r = st->rows[a][st->ijk[p][a]];
      const double m = M[3 * k + a][p];
      for (int j = 0; j < 4; ++j) {
        if (r.w[j] == 0.0) continue;
        if (r.off[j] == 0)
          center += m * r.w[j];
        else
          out.emplace_back(q + r.off[j] * st->stride[a], scale * m * r.w[j]);
      }
    }
    out.emplace_back(q, scale * center);
  }

  /// v (3N, component-major) = M grad x + c x
  void forward(const Vector& x, Vector& v) const {
    const std::size_t n = st->g->npts();
    Vector d(static_cast<Eigen::Index>(3 * n));
    for (int a = 0; a < 3; ++a) st->forward(a, x.data(), d.data() + a * n);
    v.resize(static_cast<Eigen::Index>(3 * n));
    for (int k = 0; k < 3; ++k)
      for (std::size_t p = 0; p < n; ++p)
        v[k * n + p] = M[3 * k][p] * d[p] + M[3 * k + 1][p] * d[n + p] +
                       M[3 * k + 2][p] * d[2 * n + p] + c[k][p] * x[p];
  }
  /// x = adjoint of forward applied to v (3N)
  void adjoint(const Vector& v, Vector& x) const {
    const std::size_t n = st->g->npts();
    x = Vector::Zero(static_cast<Eigen::Index>(n));
    Vector z = Vector::Zero(static_cast<Eigen::Index>(3 * n));
    for (int k = 0; k < 3; ++k)
      for (std::size_t p = 0; p < n; ++p) {
        const double vk = v[k * n + p];
        if (vk == 0.0) continue;
        for (int j = 0; j < 3; ++j) z[j * n + p] += M[3 * k + j][p] * vk;
        x[p] += c[k][p] * vk;
      }
    for (int a = 0; a < 3; ++a) st->adjoint_add(a, z.data() + a * n, x.data());
  }
};

std::vector<std::size_t> all_points(const Grid& g) {
  std::vector<std::size_t> r(g.npts());
  for (std::size_t p = 0; p < g.npts(); ++p) r[p] = p;
  return r;
}

double weight_of(const Vector& w, std::size_t i) {
  return w.size() ? w[static_cast<Eigen::Index>(i)] : 1.0;
}

/// diag += w * (sum of merged entries)^2 per column
void accumulate_row(std::vector<std::pair<std::ptrdiff_t, double>>& e, double w, Vector& d) {
  std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < e.size();) {
    double v = 0.0;
    std::size_t j = i;
    for (; j < e.size() && e[j].first == e[i].first; ++j) v += e[j].second;
    d[e[i].first] += w * v * v;
    i = j;
  }
}

}  // namespace

LinearOperator first_order_operator(const Ten3& M, const Vec3& c,
                                    const std::vector<std::size_t>& rows) {
  auto fo = std::make_shared<FirstOrderData>(M, c);
  auto rw = std::make_shared<std::vector<std::size_t>>(rows);
  const std::size_t n = M.grid()->npts(), R = rows.size();
  LinearOperator op;
  op.n_in = n;
  op.n_out = 3 * R;
  op.forward = [fo, rw, n, R](const Vector& x, Vector& y) {
    Vector v;
    fo->forward(x, v);
    y.resize(static_cast<Eigen::Index>(3 * R));
    for (int k = 0; k < 3; ++k)
      for (std::size_t r = 0; r < R; ++r) y[k * R + r] = v[k * n + (*rw)[r]];
  };
  op.adjoint = [fo, rw, n, R](const Vector& y, Vector& x) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(3 * n));
    for (int k = 0; k < 3; ++k)
      for (std::size_t r = 0; r < R; ++r) v[k * n + (*rw)[r]] += y[k * R + r];
    fo->adjoint(v, x);
  };
  op.normal_diag = [fo, rw, R](const Vector& w, Vector& d) {
    std::vector<std::pair<std::ptrdiff_t, double>> e;
    for (int k = 0; k < 3; ++k)
      for (std::size_t r = 0; r < R; ++r) {
        e.clear();
        fo->row_entries(k, (*rw)[r], 1.0, e);
        accumulate_row(e, weight_of(w, k * R + r), d);
      }
  };
  return op;
}

LinearOperator gradient_of_first_order(const Ten3& M, const Vec3& c,
                                       const std::vector<std::size_t>& rows) {
  auto fo = std::make_shared<FirstOrderData>(M, c);
  auto rw = std::make_shared<std::vector<std::size_t>>(rows);
  const std::size_t n = M.grid()->npts(), R = rows.size();
  LinearOperator op;
  op.n_in = n;
  op.n_out = 9 * R;
  op.forward = [fo, rw, n, R](const Vector& x, Vector& y) {
    Vector v;
    fo->forward(x, v);
    Vector d(static_cast<Eigen::Index>(n));
    y.resize(static_cast<Eigen::Index>(9 * R));
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < 3; ++m) {
        fo->st->forward(m, v.data() + k * n, d.data());
        for (std::size_t r = 0; r < R; ++r) y[(3 * k + m) * R + r] = d[(*rw)[r]];
      }
  };
  op.adjoint = [fo, rw, n, R](const Vector& y, Vector& x) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(3 * n));
    Vector s(static_cast<Eigen::Index>(n));
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < 3; ++m) {
        s.setZero();
        for (std::size_t r = 0; r < R; ++r) s[(*rw)[r]] += y[(3 * k + m) * R + r];
        fo->st->adjoint_add(m, s.data(), v.data() + k * n);
      }
    fo->adjoint(v, x);
  };
  op.normal_diag = [fo, rw, R](const Vector& w, Vector& d) {
    const Stencils& st = *fo->st;
    std::vector<std::pair<std::ptrdiff_t, double>> e;
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < 3; ++m)
        for (std::size_t r = 0; r < R; ++r) {
          const std::size_t p = (*rw)[r];
          const StencilRow& sr = st.rows[m][st.ijk[p][m]];
          e.clear();
          for (int j = 0; j < 4; ++j)
            if (sr.w[j] != 0.0)
              fo->row_entries(k, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(p) + sr.off[j] * st.stride[m]),
                              sr.w[j], e);
          accumulate_row(e, weight_of(w, (3 * k + m) * R + r), d);
        }
  };
  return op;
}

LinearOperator point_selection(const GridPtr& g, const std::vector<std::size_t>& rows) {
  auto rw = std::make_shared<std::vector<std::size_t>>(rows);
  const std::size_t n = g->npts(), R = rows.size();
  LinearOperator op;
  op.n_in = n;
  op.n_out = R;
  op.forward = [rw, R](const Vector& x, Vector& y) {
    y.resize(static_cast<Eigen::Index>(R));
    for (std::size_t r = 0; r < R; ++r) y[r] = x[(*rw)[r]];
  };
  op.adjoint = [rw, n, R](const Vector& y, Vector& x) {
    x = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < R; ++r) x[(*rw)[r]] += y[r];
  };
  op.normal_diag = [rw, R](const Vector& w, Vector& d) {
    for (std::size_t r = 0; r < R; ++r) d[(*rw)[r]] += weight_of(w, r);
  };
  return op;
}

LinearOperator gradient_selection(const GridPtr& g, const std::vector<std::size_t>& rows) {
  auto st = std::make_shared<Stencils>(g);
  auto rw = std::make_shared<std::vector<std::size_t>>(rows);
  const std::size_t n = g->npts(), R = rows.size();
  LinearOperator op;
  op.n_in = n;
  op.n_out = 3 * R;
  op.forward = [st, rw, n, R](const Vector& x, Vector& y) {
    Vector d(static_cast<Eigen::Index>(n));
    y.resize(static_cast<Eigen::Index>(3 * R));
    for (int a = 0; a < 3; ++a) {
      st->forward(a, x.data(), d.data());
      for (std::size_t r = 0; r < R; ++r) y[a * R + r] = d[(*rw)[r]];
    }
  };
  op.adjoint = [st, rw, n, R](const Vector& y, Vector& x) {
    x = Vector::Zero(static_cast<Eigen::Index>(n));
    Vector s(static_cast<Eigen::Index>(n));
    for (int a = 0; a < 3; ++a) {
      s.setZero();
      for (std::size_t r = 0; r < R; ++r) s[(*rw)[r]] += y[a * R + r];
      st->adjoint_add(a, s.data(), x.data());
    }
  };
  op.normal_diag = [st, rw, R](const Vector& w, Vector& d) {
    for (int a = 0; a < 3; ++a)
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t p = (*rw)[r];
        const StencilRow& sr = st->rows[a][st->ijk[p][a]];
        const double wt = weight_of(w, a * R + r);
        for (int j = 0; j < 4; ++j)
          if (sr.w[j] != 0.0)
            d[static_cast<std::ptrdiff_t>(p) + sr.off[j] * st->stride[a]] += wt * sr.w[j] * sr.w[j];
      }
  };
  return op;
}

// ---------------------------------------------------------------- observations

namespace {

double rms(const std::vector<const Scalar*>& parts) {
  double s = 0.0;
  std::size_t c = 0;
  for (const Scalar* f : parts) {
    for (double v : f->v) s += v * v;
    c += f->size();
  }
  return c ? std::sqrt(s / static_cast<double>(c)) : 0.0;
}

std::vector<const Scalar*> parts_of(const VecSeries& s) {
  std::vector<const Scalar*> r;
  for (const auto& v : s)
    for (int k = 0; k < 3; ++k) r.push_back(&v[k]);
  return r;
}
std::vector<const Scalar*> parts_of(const ScalarSeries& s) {
  std::vector<const Scalar*> r;
  for (const auto& v : s) r.push_back(&v);
  return r;
}
std::vector<const Scalar*> parts_of(const Vec3& v) { return {&v[0], &v[1], &v[2]}; }

void add_noise(Scalar& f, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : f.v) v += sd * nd(rng);
}

template <class F>
void for_each_scalar(ObservationData& o, F&& fn) {
  for (auto& v : o.u)
    for (int k = 0; k < 3; ++k) fn(v[k]);
  for (auto& v : o.H)
    for (int k = 0; k < 3; ++k) fn(v[k]);
  for (auto& s : o.p) fn(s);
  for (int k = 0; k < 3; ++k) fn(o.ut0[k]);
  for (int k = 0; k < 3; ++k) fn(o.Ht0[k]);
}

Vec3 slice_time_deriv(const VecSeries& s, int m, double dt) {
  const int nt = static_cast<int>(s.size()) - 1;
  const StencilRow r = d1_row(m, nt, dt);
  Vec3 out(s[0].grid(), 0.0);
  for (int k = 0; k < 4; ++k)
    if (r.w[k] != 0.0) out += r.w[k] * s[m + r.off[k]];
  return out;
}

bool finite_at(const Vec3& v, std::size_t p) {
  return std::isfinite(v[0][p]) && std::isfinite(v[1][p]) && std::isfinite(v[2][p]);
}
bool finite_at(const Ten3& t, std::size_t p) {
  for (const auto& c : t.c)
    if (!std::isfinite(c[p])) return false;
  return true;
}

}  // namespace

ObservationData observe(const Scenario& sc, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw PreconditionError("observe: noise level must be >= 0");
  const GridPtr& g = sc.s1.g;
  const int m0 = static_cast<int>(std::lround(sc.recipe.t0 / g->dt()));
  ObservationData o;
  o.g = g;
  o.m0 = m0;
  o.u = sc.pack.u;
  o.H = sc.pack.H;
  o.p = sc.pack.p;
  o.ut0 = sc.pack.w1[m0];
  o.Ht0 = sc.pack.h1[m0];
  o.sigma = sigma;
  o.seed = seed;
  if (sigma == 0.0) return o;
  const double su = rms(parts_of(o.u)), sH = rms(parts_of(o.H)), sp = rms(parts_of(o.p));
  const double sut = rms(parts_of(o.ut0)), sHt = rms(parts_of(o.Ht0));
  std::mt19937_64 rng(seed);
  for (auto& v : o.u)
    for (int k = 0; k < 3; ++k) add_noise(v[k], sigma * su, rng);
  for (auto& v : o.H)
    for (int k = 0; k < 3; ++k) add_noise(v[k], sigma * sH, rng);
  for (auto& s : o.p) add_noise(s, sigma * sp, rng);
  for (int k = 0; k < 3; ++k) add_noise(o.ut0[k], sigma * sut, rng);
  for (int k = 0; k < 3; ++k) add_noise(o.Ht0[k], sigma * sHt, rng);
  return o;
}

ObservationData observation_difference(const ObservationData& a, const ObservationData& b) {
  if (a.u.size() != b.u.size() || a.m0 != b.m0)
    throw PreconditionError("observation_difference: observations do not match");
  ObservationData d = a;
  for (std::size_t m = 0; m < a.u.size(); ++m) {
    d.u[m] = a.u[m] - b.u[m];
    d.H[m] = a.H[m] - b.H[m];
    d.p[m] = a.p[m] - b.p[m];
  }
  d.ut0 = a.ut0 - b.ut0;
  d.Ht0 = a.Ht0 - b.Ht0;
  return d;
}

ObservationData poison_outside(const ObservationData& obs, const Mask& keep) {
  ObservationData o = obs;
  for_each_scalar(o, [&](Scalar& f) {
    for (std::size_t p = 0; p < f.size(); ++p)
      if (!keep[p]) f[p] = kNaN;
  });
  return o;
}

std::string to_string(DerivMode m) { return m == DerivMode::Clean ? "clean" : "realistic"; }
std::string to_string(DiffusionForm f) {
  return f == DiffusionForm::Expanded ? "expanded" : "conservative";
}
std::string to_string(ReconMode m) { return m == ReconMode::Global ? "global" : "local"; }
std::string to_string(Weighting w) { return w == Weighting::Carleman ? "carleman" : "uniform"; }

MeasuredRhs assemble_rhs_from_data(const ObservationData& obs, const Background& bg,
                                   DerivMode mode, DiffusionForm form) {
  if (obs.u.empty() || obs.m0 < 0 || obs.m0 >= static_cast<int>(obs.u.size()))
    throw PreconditionError("assemble_rhs_from_data: observation lacks the t0 slice");
  const int m0 = obs.m0;
  const double dt = obs.g->dt();
  Vec3 ut, Ht;
  if (mode == DerivMode::Clean) {
    if (obs.ut0[0].size() == 0 || obs.Ht0[0].size() == 0)
      throw PreconditionError("assemble_rhs_from_data: clean mode needs supplied time derivatives");
    ut = obs.ut0;
    Ht = obs.Ht0;
  } else {
    if (obs.u.size() < 4) throw PreconditionError("assemble_rhs_from_data: realistic mode needs the time series");
    ut = slice_time_deriv(obs.u, m0, dt);
    Ht = slice_time_deriv(obs.H, m0, dt);
  }
  DifferenceSlice sl = difference_lhs_slice(ut, obs.u[m0], obs.p[m0], Ht, obs.H[m0], bg, form);
  MeasuredRhs r;
  r.mode = mode;
  r.form = form;
  r.F = sl.momentum - bg.dF;
  r.G = sl.induction - bg.dG;
  r.gradG = jacobian(r.G);
  return r;
}

// ---------------------------------------------------------------- reconstruction

namespace {

struct RowWeights {
  Scalar w;       ///< data weight, max 1 over the data rows
  Scalar phi_sq;  ///< (s lambda phi)^2 at t0
};

RowWeights row_weights(const ReconContext& ctx, const ReconParams& prm,
                       const std::vector<std::size_t>& rows) {
  const Grid& g = *ctx.g;
  Scalar lw(ctx.g), lphi(ctx.g);
  if (prm.mode == ReconMode::Global) {
    TimeProfile prof = build_time_profile(ctx.t0, g.T(), g);
    SingularWeight sw = build_singular_weight(ctx.d, prof, prm.lambda, prm.s);
    lw = sw.log_weight_at(ctx.t0);
    lphi = sw.log_phi(ctx.t0);
  } else {
    RegularWeight rw = build_regular_weight(ctx.d, ctx.t0, g.T(), prm.lambda, prm.s, prm.beta_margin);
    lw = rw.log_weight_at(ctx.t0);
    lphi = rw.log_phi(ctx.t0);
  }
  RowWeights out{Scalar(ctx.g, 1.0), Scalar(ctx.g, 0.0)};
  if (prm.weighting == Weighting::Carleman) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t p : rows) mx = std::max(mx, lw[p]);
    for (std::size_t p = 0; p < g.npts(); ++p) out.w[p] = std::exp(lw[p] - mx);
  }
  const double sl = prm.s * prm.lambda;
  for (std::size_t p = 0; p < g.npts(); ++p) out.phi_sq[p] = sl * sl * std::exp(2.0 * lphi[p]);
  return out;
}

/// Mean Euclidean norm of the weighted rows of M grad x + c x over the listed points.
double mean_row_norm(const Ten3& M, const Vec3& c, const std::vector<std::size_t>& rows,
                     const Scalar& w) {
  const Grid& g = *M.grid();
  double total = 0.0;
  for (std::size_t p : rows) {
    const auto ix = g.ijk(p);
    for (int k = 0; k < 3; ++k) {
      double center = c[k][p], sq = 0.0;
      for (int a = 0; a < 3; ++a) {
        const StencilRow r = d1_row(ix[a], g.n(a), g.h(a));
        for (int q = 0; q < 4; ++q) {
          if (r.w[q] == 0.0) continue;
          const double v = M.at(k, a)[p] * r.w[q];
          if (r.off[q] == 0)
            center += v;
          else
            sq += v * v;
        }
      }
      total += std::sqrt(w[p] * (sq + center * center));
    }
  }
  return rows.empty() ? 0.0 : total / (3.0 * static_cast<double>(rows.size()));
}

/// Points reached by the first-derivative stencils of the listed rows.
Mask touched(const Grid& g, const std::vector<std::size_t>& rows, int reach) {
  Mask m(g.npts(), 0);
  for (std::size_t p : rows) {
    const auto ix = g.ijk(p);
    for (int a = 0; a < 3; ++a) {
      const int lo = std::max(0, ix[a] - reach), hi = std::min(g.n(a), ix[a] + reach);
      for (int i = lo; i <= hi; ++i) {
        auto jx = ix;
        jx[a] = i;
        m[g.idx(jx[0], jx[1], jx[2])] = 1;
      }
    }
  }
  return m;
}

void append(Vector& b, const std::vector<double>& v) {
  const Eigen::Index o = b.size();
  b.conservativeResize(o + static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) b[o + static_cast<Eigen::Index>(i)] = v[i];
}

LinearOperator weighted(LinearOperator op, const std::vector<double>& w) {
  op.row_weight = Vector(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) op.row_weight[static_cast<Eigen::Index>(i)] = w[i];
  return op;
}

double min_det_sym(const Vec3& u1, const Mask& region) {
  const Scalar det = det3(sym_grad(u1));
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < det.size(); ++p)
    if (region[p]) m = std::min(m, std::abs(det[p]));
  return m;
}
double min_cross(const DistanceFunction& d, const Vec3& b, const Mask& region) {
  const Scalar c = norm2(cross(d.grad, b));
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < c.size(); ++p)
    if (region[p]) m = std::min(m, std::sqrt(c[p]));
  return m;
}

Mask closure_of_band(const DistanceFunction& d, double level) {
  Mask m(d.d.size(), 0);
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = d.d[p] >= level - 1e-12 ? 1 : 0;
  return m;
}

struct Assembled {
  LsqProblem prob;
  Mask report;
  std::size_t data_rows = 0;
  double rho_gamma = 0.0;
  // evaluation of the data residual for a solution
  std::function<double(const Vector&)> residual;
};

Assembled assemble_nu(const ReconContext& ctx, const MeasuredRhs& rhs, const Vec3& u1_t0,
                      const Scalar& nu_b, const ReconParams& prm) {
  const Grid& g = *ctx.g;
  const bool local = prm.mode == ReconMode::Local;
  const double level = 3.0 * prm.eps;
  const Mask region = local ? closure_of_band(ctx.d, level) : full_mask(g);
  const double md = min_det_sym(u1_t0, region);
  if (!(md > 1e-6)) {
    std::ostringstream os;
    os << "reconstruct_nu: det E(u1) vanishes on the region (min |det| = " << md << ")";
    throw NumericalError(os.str());
  }
  const Ten3 A = 2.0 * sym_grad(u1_t0);
  const Vec3 divA = div(A);

  Scalar chi(ctx.g, 1.0);
  if (local) {
    RegularWeight rw = build_regular_weight(ctx.d, ctx.t0, g.T(), prm.lambda, prm.s, prm.beta_margin);
    chi = build_cutoffs(prm.eps, ctx.d, rw).chi1;
  }
  std::vector<std::size_t> rows;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const bool ok = finite_at(rhs.F, p);
    if (local) {
      if (ctx.d.d[p] > level && ok) rows.push_back(p);
    } else {
      if (!ok) throw PreconditionError("reconstruct_nu: non-finite data in global mode");
      rows.push_back(p);
    }
  }
  if (rows.empty()) throw PreconditionError("reconstruct_nu: no data rows");
  const RowWeights rwts = row_weights(ctx, prm, rows);

  Assembled as;
  as.data_rows = rows.size();
  LinearOperator P = first_order_operator(A, divA, rows);
  std::vector<double> w, b;
  for (int k = 0; k < 3; ++k)
    for (std::size_t p : rows) {
      w.push_back(rwts.w[p]);
      b.push_back(chi[p] * rhs.F[k][p]);
    }
  const double row_norm = mean_row_norm(A, divA, rows, rwts.w);
  as.rho_gamma = prm.rho_gamma_factor * row_norm;

  // boundary data on Gamma, zero where the cutoff vanishes, and untouched columns
  std::vector<std::size_t> pin;
  std::vector<double> pin_val;
  const Mask reach = touched(g, rows, 3);
  for (std::size_t p = 0; p < g.npts(); ++p) {
    if (local && ctx.d.d[p] <= level) {
      pin.push_back(p);
      pin_val.push_back(0.0);
    } else if (ctx.bp.gamma_mask[p]) {
      pin.push_back(p);
      pin_val.push_back(chi[p] * nu_b[p]);
    } else if (!reach[p]) {
      pin.push_back(p);
      pin_val.push_back(0.0);
    }
  }
  std::vector<LinearOperator> blocks{weighted(P, w)};
  Vector bb;
  append(bb, b);
  if (!pin.empty()) {
    blocks.push_back(weighted(point_selection(ctx.g, pin), std::vector<double>(pin.size(), as.rho_gamma)));
    append(bb, pin_val);
  }
  as.prob.op = stack(blocks);
  as.prob.rhs = bb;
  as.prob.opt.rho = prm.rho_reg_factor * row_norm;
  as.prob.opt.tol = prm.tol;
  as.prob.opt.max_iter = prm.max_iter;
  if (as.prob.opt.rho > 0.0) {
    as.prob.reg = gradient_selection(ctx.g, all_points(g));
    as.prob.has_reg = true;
  }
  Mask rep = local ? omega_eps(ctx.d, 5.0 * prm.eps) : full_mask(g);
  as.report = rep;
  const Vector bdata = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  const double vol = g.h(0) * g.h(1) * g.h(2);
  as.residual = [P, bdata, vol](const Vector& x) { return std::sqrt(vol) * (P.apply(x) - bdata).norm(); };
  return as;
}

Assembled assemble_kappa(const ReconContext& ctx, const MeasuredRhs& rhs, const Vec3& H1_t0,
                         const Scalar& kappa_b, const ReconParams& prm) {
  const Grid& g = *ctx.g;
  const bool local = prm.mode == ReconMode::Local;
  const double level = 3.0 * prm.eps;
  const Mask region = local ? closure_of_band(ctx.d, level) : full_mask(g);
  const Vec3 b = rot(H1_t0);
  const double mc = min_cross(ctx.d, b, region);
  if (!(mc > 1e-6)) {
    std::ostringstream os;
    os << "reconstruct_kappa: grad d x rot H1 vanishes on the region (min = " << mc << ")";
    throw NumericalError(os.str());
  }
  const Ten3 B = skew_of(b);
  const Vec3 rb = rot(b);

  Scalar chi(ctx.g, 1.0);
  Vec3 gchi(ctx.g, 0.0);
  if (local) {
    RegularWeight rw = build_regular_weight(ctx.d, ctx.t0, g.T(), prm.lambda, prm.s, prm.beta_margin);
    CutoffSet cs = build_cutoffs(prm.eps, ctx.d, rw);
    chi = cs.chi1;
    gchi = cs.grad_chi1;
  }
  std::vector<std::size_t> rows, grows;
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const bool ok = finite_at(rhs.G, p), gok = finite_at(rhs.gradG, p);
    if (local) {
      if (ctx.d.d[p] > level && ok) rows.push_back(p);
      if (prm.grad_q_block && ctx.d.d[p] > level && ok && gok) grows.push_back(p);
    } else {
      if (!ok || !gok) throw PreconditionError("reconstruct_kappa: non-finite data in global mode");
      rows.push_back(p);
      if (prm.grad_q_block) grows.push_back(p);
    }
  }
  if (rows.empty()) throw PreconditionError("reconstruct_kappa: no data rows");
  const RowWeights rwts = row_weights(ctx, prm, rows);

  Assembled as;
  as.data_rows = rows.size() + grows.size();
  LinearOperator Q = first_order_operator(B, rb, rows);
  std::vector<double> w, bv;
  for (int k = 0; k < 3; ++k)
    for (std::size_t p : rows) {
      w.push_back(rwts.w[p]);
      bv.push_back(-chi[p] * rhs.G[k][p]);
    }
  std::vector<LinearOperator> blocks{weighted(Q, w)};
  Vector bb;
  append(bb, bv);
  if (!grows.empty()) {
    LinearOperator GQ = gradient_of_first_order(B, rb, grows);
    std::vector<double> gw, gb;
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < 3; ++m)
        for (std::size_t p : grows) {
          gw.push_back(rwts.w[p] / rwts.phi_sq[p]);
          // d_m (chi G_k)
          gb.push_back(-(chi[p] * rhs.gradG.at(k, m)[p] + rhs.G[k][p] * gchi[m][p]));
        }
    blocks.push_back(weighted(GQ, gw));
    append(bb, gb);
  }
  const double row_norm = mean_row_norm(B, rb, rows, rwts.w);
  as.rho_gamma = prm.rho_gamma_factor * row_norm;

  // kappa and grad kappa on the boundary part, zero below the cutoff, untouched columns
  const Scalar chik = chi * kappa_b;
  const Vec3 gck = grad(kappa_b);
  std::vector<std::size_t> pin, gpin;
  std::vector<double> pin_val, gpin_val;
  const Mask reach = touched(g, grows.empty() ? rows : grows, 6);
  const Mask& bdy = local ? ctx.bp.gamma_mask : Mask();
  for (std::size_t p = 0; p < g.npts(); ++p) {
    const bool on_b = local ? bool(bdy[p]) : g.on_boundary(p);
    if (local && ctx.d.d[p] <= level) {
      pin.push_back(p);
      pin_val.push_back(0.0);
    } else if (on_b) {
      pin.push_back(p);
      pin_val.push_back(chik[p]);
      gpin.push_back(p);
    } else if (!reach[p]) {
      pin.push_back(p);
      pin_val.push_back(0.0);
    }
  }
  for (int a = 0; a < 3; ++a)
    for (std::size_t p : gpin) gpin_val.push_back(chi[p] * gck[a][p] + kappa_b[p] * gchi[a][p]);
  if (!pin.empty()) {
    blocks.push_back(weighted(point_selection(ctx.g, pin), std::vector<double>(pin.size(), as.rho_gamma)));
    append(bb, pin_val);
  }
  if (!gpin.empty()) {
    // every penalty row is scaled to unit norm before the penalty weight applies
    std::vector<double> gw;
    for (int a = 0; a < 3; ++a)
      for (std::size_t p : gpin) {
        const StencilRow r = d1_row(g.ijk(p)[a], g.n(a), g.h(a));
        double sq = 0.0;
        for (double c : r.w) sq += c * c;
        gw.push_back(as.rho_gamma / sq);
      }
    blocks.push_back(weighted(gradient_selection(ctx.g, gpin), gw));
    append(bb, gpin_val);
  }
  as.prob.op = stack(blocks);
  as.prob.rhs = bb;
  as.prob.opt.rho = prm.rho_reg_factor * row_norm;
  as.prob.opt.tol = prm.tol;
  as.prob.opt.max_iter = prm.max_iter;
  if (as.prob.opt.rho > 0.0) {
    as.prob.reg = gradient_selection(ctx.g, all_points(g));
    as.prob.has_reg = true;
  }
  as.report = local ? omega_eps(ctx.d, 5.0 * prm.eps) : full_mask(g);
  const Vector bdata = Eigen::Map<const Vector>(bv.data(), static_cast<Eigen::Index>(bv.size()));
  const double vol = g.h(0) * g.h(1) * g.h(2);
  as.residual = [Q, bdata, vol](const Vector& x) { return std::sqrt(vol) * (Q.apply(x) - bdata).norm(); };
  return as;
}

FieldReconstruction solve_assembled(Assembled& as, const GridPtr& g, const ReconParams& prm,
                                    const Scalar* truth) {
  FieldReconstruction fr;
  as.prob.opt.reg = as.prob.has_reg ? &as.prob.reg : nullptr;
  Vector x = lsq_solve(as.prob.op, as.prob.rhs, as.prob.opt, fr.stats);
  fr.estimate = Scalar(g, 0.0);
  for (std::size_t p = 0; p < g->npts(); ++p) fr.estimate[p] = x[static_cast<Eigen::Index>(p)];
  fr.report_mask = as.report;
  fr.residual_norm = as.residual(x);
  fr.rho_gamma = as.rho_gamma;
  fr.rho_reg = as.prob.opt.rho;
  fr.data_rows = as.data_rows;
  if (truth) {
    const double e = sobolev_norm(fr.estimate - *truth, 1, as.report);
    const double t = sobolev_norm(*truth, 1, as.report);
    fr.err_H1 = e;
    fr.rel_err_H1 = t > 0.0 ? e / t : e;
  }
  if (prm.mode == ReconMode::Local)
    for (std::size_t p = 0; p < g->npts(); ++p)
      if (!as.report[p]) fr.estimate[p] = std::numeric_limits<double>::quiet_NaN();
  return fr;
}

}  // namespace

LsqProblem build_nu_problem(const ReconContext& ctx, const MeasuredRhs& rhs, const Vec3& u1_t0,
                            const Scalar& nu_boundary, const ReconParams& prm) {
  return assemble_nu(ctx, rhs, u1_t0, nu_boundary, prm).prob;
}
LsqProblem build_kappa_problem(const ReconContext& ctx, const MeasuredRhs& rhs,
                               const Vec3& H1_t0, const Scalar& kappa_boundary,
                               const ReconParams& prm) {
  return assemble_kappa(ctx, rhs, H1_t0, kappa_boundary, prm).prob;
}

FieldReconstruction reconstruct_nu(const ReconContext& ctx, const MeasuredRhs& rhs,
                                   const Vec3& u1_t0, const Scalar& nu_boundary,
                                   const ReconParams& prm, const Scalar* truth) {
  Assembled as = assemble_nu(ctx, rhs, u1_t0, nu_boundary, prm);
  return solve_assembled(as, ctx.g, prm, truth);
}

FieldReconstruction reconstruct_kappa(const ReconContext& ctx, const MeasuredRhs& rhs,
                                      const Vec3& H1_t0, const Scalar& kappa_boundary,
                                      const ReconParams& prm, const Scalar* truth) {
  Assembled as = assemble_kappa(ctx, rhs, H1_t0, kappa_boundary, prm);
  return solve_assembled(as, ctx.g, prm, truth);
}

Mask local_data_mask(const ReconContext& ctx, double eps) {
  Mask m = omega_eps(ctx.d, 3.0 * eps);
  for (std::size_t p = 0; p < m.size(); ++p)
    if (ctx.bp.gamma_mask[p]) m[p] = 1;
  return m;
}

ReconContext make_context(const GridPtr& g, const BoundaryPartition& bp,
                          const DistanceFunction& d, double t0) {
  return ReconContext{g, bp, d, t0};
}

ReconstructionResult reconstruct(const ReconContext& ctx, const Scenario& sc,
                                 const ObservationData& obs, const ReconParams& prm) {
  const Background bg = background_at(sc.s1, sc.s2, obs.m0);
  const MeasuredRhs rhs =
      prm.mode == ReconMode::Local
          ? assemble_rhs_from_data(poison_outside(obs, local_data_mask(ctx, prm.eps)), bg,
                                   prm.deriv, prm.diffusion)
          : assemble_rhs_from_data(obs, bg, prm.deriv, prm.diffusion);
  ReconstructionResult r;
  r.params = prm;
  r.nu = reconstruct_nu(ctx, rhs, sc.s1.u[obs.m0], sc.nu_true, prm, &sc.nu_true);
  r.kappa = reconstruct_kappa(ctx, rhs, sc.s1.H[obs.m0], sc.kappa_true, prm, &sc.kappa_true);
  r.D = measurement_norm_D(obs, prm.mode, ctx.d, ctx.bp, prm.eps).value;
  return r;
}

// ---------------------------------------------------------------- norms

namespace {

/// Sobolev norm squared over the mask points where every partial is finite.
double finite_sobolev_sq(const Scalar& f, int order, const Mask& mask) {
  double total = 0.0;
  for (int a = 0; a <= order; ++a)
    for (int b = 0; a + b <= order; ++b)
      for (int c = 0; a + b + c <= order; ++c) {
        Scalar d = partial(f, {a, b, c});
        Mask m = mask;
        for (std::size_t p = 0; p < m.size(); ++p)
          if (!std::isfinite(d[p])) {
            m[p] = 0;
            d[p] = 0.0;
          }
        total += integrate_weighted(d * d, m).value();
      }
  return total;
}
double finite_sobolev_sq(const Vec3& f, int order, const Mask& mask) {
  return finite_sobolev_sq(f[0], order, mask) + finite_sobolev_sq(f[1], order, mask) +
         finite_sobolev_sq(f[2], order, mask);
}

Scalar finite_or_zero(Scalar s) {
  for (auto& v : s.v)
    if (!std::isfinite(v)) v = 0.0;
  return s;
}

/// sum_{j <= 2} int over the chosen faces and (0, T) of the density of d_t^j f
template <class Series, class Dens>
double trace_h02_sq(const Series& f, double dt, const std::array<bool, 6>& faces, Dens&& dens) {
  const Grid& g = *f[0].c[0].g;
  ScalarSeries zero(f.size(), Scalar(f[0].c[0].g, 0.0));
  double total = 0.0;
  Series cur = f;
  for (int j = 0; j <= 2; ++j) {
    ScalarSeries dd;
    for (std::size_t m = 0; m < cur.size(); ++m) dd.push_back(finite_or_zero(dens(cur, m)));
    total += integrate_surface(dd, zero, Box::full(g), faces, dt).value();
    if (j < 2) cur = time_deriv(cur, dt);
  }
  return total;
}

}  // namespace

MeasurementNorm measurement_norm_D(const ObservationData& obs, ReconMode mode,
                                   const DistanceFunction& d, const BoundaryPartition& bp,
                                   double eps) {
  if (obs.u.empty() || obs.H.empty() || obs.p.empty())
    throw PreconditionError("measurement_norm_D: observation lacks u, H or p");
  const Grid& g = *obs.g;
  const double dt = g.dt();
  const bool local = mode == ReconMode::Local;
  const Mask vol = local ? omega_eps(d, 3.0 * eps) : full_mask(g);
  const std::array<bool, 6> faces =
      local ? bp.gamma : std::array<bool, 6>{true, true, true, true, true, true};
  const int m0 = obs.m0;
  MeasurementNorm D;
  auto add = [&D](const std::string& n, double sq) { D.terms.push_back({n, std::sqrt(std::max(0.0, sq))}); };

  add("u_t0_H2", finite_sobolev_sq(obs.u[m0], 2, vol));
  add("H_t0_H3", finite_sobolev_sq(obs.H[m0], 3, vol));
  {
    const Vec3 gp = grad(obs.p[m0]);
    add("grad_p_t0_L2", finite_sobolev_sq(gp, 0, vol));
  }
  // boundary traces; two time derivatives each
  auto vec_sq = [](const VecSeries& s, std::size_t m) { return norm2(s[m]); };
  auto grad_xt_sq = [dt](const VecSeries& s, std::size_t m) {
    const int nt = static_cast<int>(s.size()) - 1;
    const StencilRow r = d1_row(static_cast<int>(m), nt, dt);
    Vec3 st(s[0].grid(), 0.0);
    for (int k = 0; k < 4; ++k)
      if (r.w[k] != 0.0) st += r.w[k] * s[m + r.off[k]];
    return norm2(jacobian(s[m])) + norm2(st);
  };
  add("u_sigma_H02", trace_h02_sq(obs.u, dt, faces, vec_sq));
  add("grad_xt_u_sigma_H02", trace_h02_sq(obs.u, dt, faces, grad_xt_sq));
  add("H_sigma_H02", trace_h02_sq(obs.H, dt, faces, vec_sq));
  add("grad_xt_H_sigma_H02", trace_h02_sq(obs.H, dt, faces, grad_xt_sq));
  {
    double total = 0.0;
    ScalarSeries cur = obs.p;
    const int nt = g.nt();
    for (int j = 0; j <= 2; ++j) {
      for (int m = 0; m <= nt; ++m) {
        const double wt = (m == 0 || m == nt) ? 0.5 * dt : dt;
        const double v = trace_half_norm_sq(finite_or_zero(cur[m]), faces);
        total += wt * v;
      }
      if (j < 2) cur = time_deriv(cur, dt);
    }
    add("p_sigma_H_half_2", total);
  }
  for (const auto& t : D.terms) D.value += t.value;
  return D;
}

double prior_bound_M(const DifferencePack& pack, const Scalar& nu, const Scalar& kappa,
                     const DistanceFunction& d, double eps) {
  if (pack.u.empty() || pack.w1.empty() || pack.w2.empty())
    throw PreconditionError("prior_bound_M: pack lacks the time derivatives");
  const double dt = pack.u[0].grid()->dt();
  const std::array<const VecSeries*, 3> us{&pack.u, &pack.w1, &pack.w2};
  const std::array<const VecSeries*, 3> Hs{&pack.H, &pack.h1, &pack.h2};
  const std::array<const ScalarSeries*, 3> ps{&pack.p, &pack.q1, &pack.q2};
  double M = 0.0;
  for (int j = 0; j <= 2; ++j) {
    M += sobolev_norm_st(*us[j], 1, 1, dt);
    M += sobolev_norm_st(*Hs[j], 1, 0, dt);
    M += sobolev_norm_st(*ps[j], 0, 0, dt);
  }
  const Mask m3 = omega_eps(d, 3.0 * eps);
  M += sobolev_norm(nu, 1, m3) + sobolev_norm(kappa, 1, m3);
  return M;
}

}  // namespace cmhd

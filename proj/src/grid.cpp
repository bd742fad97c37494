#include "cmhd/grid.hpp"

#include <algorithm>
#include <sstream>

namespace cmhd {

std::string face_name(int f) {
  static const char* names[6] = {"x=0", "x=1", "y=0", "y=1", "z=0", "z=1"};
  return (f >= 0 && f < 6) ? names[f] : "?";
}

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  if (spec.nx < 8 || spec.ny < 8 || spec.nz < 8)
    throw PreconditionError("grid: cell counts per axis must be >= 8");
  if (spec.nt < 8) throw PreconditionError("grid: nt must be >= 8");
  if (!(spec.T > 0.0) || !std::isfinite(spec.T)) throw PreconditionError("grid: T must be > 0");
  n_ = {spec.nx, spec.ny, spec.nz};
  for (int a = 0; a < 3; ++a) h_[a] = 1.0 / n_[a];
  stride_ = {1, static_cast<std::size_t>(n_[0] + 1),
             static_cast<std::size_t>(n_[0] + 1) * (n_[1] + 1)};
  nt_ = spec.nt;
  T_ = spec.T;
  dt_ = T_ / nt_;
  npts_ = static_cast<std::size_t>(n_[0] + 1) * (n_[1] + 1) * (n_[2] + 1);
}

bool Grid::on_face(std::size_t p, int face) const {
  auto c = ijk(p);
  int a = face_axis(face);
  return face_is_hi(face) ? c[a] == n_[a] : c[a] == 0;
}

bool Grid::on_boundary(std::size_t p) const {
  auto c = ijk(p);
  for (int a = 0; a < 3; ++a)
    if (c[a] == 0 || c[a] == n_[a]) return true;
  return false;
}

bool Grid::same_as(const Grid& o) const {
  return n_ == o.n_ && nt_ == o.nt_ && T_ == o.T_;
}

std::array<bool, 6> default_gamma() { return {true, true, true, true, false, true}; }

std::pair<GridPtr, BoundaryPartition> build_grid(const GridSpec& spec,
                                                 const std::array<bool, 6>& gamma) {
  int count = 0;
  for (bool b : gamma) count += b ? 1 : 0;
  if (count == 0) throw PreconditionError("build_grid: observation boundary Gamma is empty");
  if (count == 6)
    throw PreconditionError("build_grid: Gamma must exclude at least one face");
  auto g = std::make_shared<const Grid>(spec);
  BoundaryPartition bp;
  bp.gamma = gamma;
  bp.gamma_mask.assign(g->npts(), 0);
  bp.rest_mask.assign(g->npts(), 0);
  bp.normal.assign(g->npts(), {0.0, 0.0, 0.0});
  for (std::size_t p = 0; p < g->npts(); ++p) {
    if (!g->on_boundary(p)) continue;
    bool in_gamma = false;
    std::array<double, 3> nrm{0, 0, 0};
    for (int f = 0; f < 6; ++f) {
      if (!g->on_face(p, f)) continue;
      if (gamma[f]) in_gamma = true;
      nrm[face_axis(f)] += face_is_hi(f) ? 1.0 : -1.0;
    }
    double len = std::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
    for (auto& x : nrm) x /= len;
    bp.normal[p] = nrm;
    (in_gamma ? bp.gamma_mask : bp.rest_mask)[p] = 1;
  }
  return {g, bp};
}

// ---------------------------------------------------------------- sampling

Scalar sample(const GridPtr& g, const ScalarFn& f, double t) {
  Scalar out(g);
  for (std::size_t p = 0; p < g->npts(); ++p) {
    auto x = g->xyz(p);
    double v = f(x[0], x[1], x[2], t);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "sample: non-finite value at (" << x[0] << ", " << x[1] << ", " << x[2]
         << ", t=" << t << ")";
      throw NumericalError(os.str());
    }
    out[p] = v;
  }
  return out;
}

Vec3 sample(const GridPtr& g, const VecFn& f, double t) {
  Vec3 out(g);
  for (std::size_t p = 0; p < g->npts(); ++p) {
    auto x = g->xyz(p);
    auto v = f(x[0], x[1], x[2], t);
    for (int c = 0; c < 3; ++c) {
      if (!std::isfinite(v[c])) {
        std::ostringstream os;
        os << "sample: non-finite component " << c << " at (" << x[0] << ", " << x[1]
           << ", " << x[2] << ", t=" << t << ")";
        throw NumericalError(os.str());
      }
      out[c][p] = v[c];
    }
  }
  return out;
}

ScalarSeries sample_series(const GridPtr& g, const ScalarFn& f) {
  ScalarSeries s;
  s.reserve(g->nt() + 1);
  for (int m = 0; m <= g->nt(); ++m) s.push_back(sample(g, f, g->t(m)));
  return s;
}

VecSeries sample_series(const GridPtr& g, const VecFn& f) {
  VecSeries s;
  s.reserve(g->nt() + 1);
  for (int m = 0; m <= g->nt(); ++m) s.push_back(sample(g, f, g->t(m)));
  return s;
}

void require_same_grid(const Scalar& a, const Scalar& b, const char* where) {
  if (!a.g || !b.g) throw PreconditionError(std::string(where) + ": field without grid");
  if (a.g != b.g && !a.g->same_as(*b.g))
    throw PreconditionError(std::string(where) + ": grid mismatch");
}

void require_finite(const Scalar& a, const char* what) {
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (!std::isfinite(a[p])) {
      auto x = a.g->xyz(p);
      std::ostringstream os;
      os << what << ": non-finite entry at (" << x[0] << ", " << x[1] << ", " << x[2] << ")";
      throw NumericalError(os.str());
    }
  }
}

// ---------------------------------------------------------------- arithmetic

namespace {
template <class Op>
Scalar zip(const Scalar& a, const Scalar& b, Op op) {
  require_same_grid(a, b, "pointwise");
  Scalar out(a.g);
  for (std::size_t p = 0; p < a.size(); ++p) out[p] = op(a[p], b[p]);
  return out;
}
}  // namespace

Scalar operator+(const Scalar& a, const Scalar& b) {
  return zip(a, b, [](double x, double y) { return x + y; });
}
Scalar operator-(const Scalar& a, const Scalar& b) {
  return zip(a, b, [](double x, double y) { return x - y; });
}
Scalar operator-(const Scalar& a) {
  Scalar out(a.g);
  for (std::size_t p = 0; p < a.size(); ++p) out[p] = -a[p];
  return out;
}
Scalar operator*(double s, const Scalar& a) {
  Scalar out(a.g);
  for (std::size_t p = 0; p < a.size(); ++p) out[p] = s * a[p];
  return out;
}
Scalar operator*(const Scalar& a, const Scalar& b) {
  return zip(a, b, [](double x, double y) { return x * y; });
}
Scalar& operator+=(Scalar& a, const Scalar& b) {
  require_same_grid(a, b, "+=");
  for (std::size_t p = 0; p < a.size(); ++p) a[p] += b[p];
  return a;
}
Scalar& operator-=(Scalar& a, const Scalar& b) {
  require_same_grid(a, b, "-=");
  for (std::size_t p = 0; p < a.size(); ++p) a[p] -= b[p];
  return a;
}

Vec3 operator+(const Vec3& a, const Vec3& b) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = a[i] + b[i];
  return o;
}
Vec3 operator-(const Vec3& a, const Vec3& b) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = a[i] - b[i];
  return o;
}
Vec3 operator-(const Vec3& a) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = -a[i];
  return o;
}
Vec3 operator*(double s, const Vec3& a) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = s * a[i];
  return o;
}
Vec3 operator*(const Scalar& s, const Vec3& a) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = s * a[i];
  return o;
}
Vec3& operator+=(Vec3& a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) a[i] += b[i];
  return a;
}
Vec3& operator-=(Vec3& a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) a[i] -= b[i];
  return a;
}
Ten3 operator+(const Ten3& a, const Ten3& b) {
  Ten3 o;
  for (int i = 0; i < 9; ++i) o.c[i] = a.c[i] + b.c[i];
  return o;
}
Ten3 operator*(double s, const Ten3& a) {
  Ten3 o;
  for (int i = 0; i < 9; ++i) o.c[i] = s * a.c[i];
  return o;
}
Ten3 operator*(const Scalar& s, const Ten3& a) {
  Ten3 o;
  for (int i = 0; i < 9; ++i) o.c[i] = s * a.c[i];
  return o;
}

Scalar dot(const Vec3& a, const Vec3& b) {
  Scalar out(a.grid());
  for (int i = 0; i < 3; ++i) require_same_grid(a[i], b[i], "dot");
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = a[0][p] * b[0][p] + a[1][p] * b[1][p] + a[2][p] * b[2][p];
  return out;
}

Scalar norm2(const Vec3& a) { return dot(a, a); }

Scalar norm2(const Ten3& a) {
  Scalar out(a.grid());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (int i = 0; i < 9; ++i) s += a.c[i][p] * a.c[i][p];
    out[p] = s;
  }
  return out;
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  Vec3 o(a.grid());
  for (int i = 0; i < 3; ++i) require_same_grid(a[i], b[i], "cross");
  for (std::size_t p = 0; p < o[0].size(); ++p) {
    o[0][p] = a[1][p] * b[2][p] - a[2][p] * b[1][p];
    o[1][p] = a[2][p] * b[0][p] - a[0][p] * b[2][p];
    o[2][p] = a[0][p] * b[1][p] - a[1][p] * b[0][p];
  }
  return o;
}

Ten3 outer(const Vec3& a, const Vec3& b) {
  Ten3 o;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) o.at(i, j) = a[i] * b[j];
  return o;
}

Vec3 matvec(const Ten3& A, const Vec3& x) {
  Vec3 o(x.grid());
  for (std::size_t p = 0; p < o[0].size(); ++p)
    for (int i = 0; i < 3; ++i)
      o[i][p] = A.at(i, 0)[p] * x[0][p] + A.at(i, 1)[p] * x[1][p] + A.at(i, 2)[p] * x[2][p];
  return o;
}

Ten3 transpose(const Ten3& A) {
  Ten3 o;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) o.at(i, j) = A.at(j, i);
  return o;
}

namespace {

/// Product with the factors ordered by magnitude, so permuted triples round identically.
double triple(double a, double b, double c) {
  double m[3] = {std::abs(a), std::abs(b), std::abs(c)};
  std::sort(m, m + 3);
  const bool neg = ((a < 0) != (b < 0)) != (c < 0);
  const double v = m[0] * m[1] * m[2];
  return neg ? -v : v;
}

}  // namespace

Scalar det3(const Ten3& A) {
  Scalar o(A.grid());
  for (std::size_t p = 0; p < o.size(); ++p) {
    auto a = [&](int i, int j) { return A.at(i, j)[p]; };
    const double plus = triple(a(0, 0), a(1, 1), a(2, 2)) + triple(a(0, 1), a(1, 2), a(2, 0)) +
                        triple(a(0, 2), a(1, 0), a(2, 1));
    const double minus = triple(a(0, 2), a(1, 1), a(2, 0)) + triple(a(0, 1), a(1, 0), a(2, 2)) +
                         triple(a(0, 0), a(1, 2), a(2, 1));
    o[p] = plus - minus;
  }
  return o;
}

Vec3 constant_vec(const GridPtr& g, const std::array<double, 3>& v) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = Scalar(g, v[i]);
  return o;
}

Ten3 skew_of(const Vec3& b) {
  // x cross b = (x2 b3 - x3 b2, x3 b1 - x1 b3, x1 b2 - x2 b1)
  Ten3 B(b.grid());
  B.at(0, 1) = b[2];
  B.at(0, 2) = -b[1];
  B.at(1, 0) = -b[2];
  B.at(1, 2) = b[0];
  B.at(2, 0) = b[1];
  B.at(2, 1) = -b[0];
  return B;
}

double max_abs(const Scalar& a) {
  double m = 0.0;
  for (double x : a.v) m = std::max(m, std::abs(x));
  return m;
}
double max_abs(const Vec3& a) {
  return std::max({max_abs(a[0]), max_abs(a[1]), max_abs(a[2])});
}
double max_abs(const Ten3& a) {
  double m = 0.0;
  for (const auto& c : a.c) m = std::max(m, max_abs(c));
  return m;
}

// ---------------------------------------------------------------- stencils

// The one-sided closure is chosen so that its leading truncation error, h^2 f'''/6,
// equals the central one. Compositions of first derivatives along one axis then stay
// second order up to the faces.
StencilRow d1_row(int i, int n, double h) {
  const double s = 1.0 / h, c = 1.0 / (2.0 * h);
  if (i == 0) return {{0, 1, 2, 3}, {-2.0 * s, 3.5 * s, -2.0 * s, 0.5 * s}};
  if (i == n) return {{0, -1, -2, -3}, {2.0 * s, -3.5 * s, 2.0 * s, -0.5 * s}};
  return {{-1, 0, 1, 0}, {-c, 0.0, c, 0.0}};
}

Scalar deriv(const Scalar& f, int axis) {
  const Grid& g = *f.g;
  Scalar out(f.g);
  const int n = g.n(axis);
  const double h = g.h(axis);
  const auto st = static_cast<std::ptrdiff_t>(g.stride(axis));
  for (std::size_t p = 0; p < g.npts(); ++p) {
    int i = g.ijk(p)[axis];
    StencilRow r = d1_row(i, n, h);
    double acc = 0.0;
    for (int q = 0; q < 4; ++q) acc += r.w[q] * f.v[p + r.off[q] * st];
    out[p] = acc;
  }
  return out;
}

Scalar deriv2(const Scalar& f, int axis) {
  const Grid& g = *f.g;
  Scalar out(f.g);
  const int n = g.n(axis);
  const double ih2 = 1.0 / (g.h(axis) * g.h(axis));
  const auto st = static_cast<std::ptrdiff_t>(g.stride(axis));
  const double* v = f.v.data();
  for (std::size_t p = 0; p < g.npts(); ++p) {
    int i = g.ijk(p)[axis];
    const auto q = static_cast<std::ptrdiff_t>(p);
    double r;
    if (i == 0)
      r = 2.0 * v[q] - 5.0 * v[q + st] + 4.0 * v[q + 2 * st] - v[q + 3 * st];
    else if (i == n)
      r = 2.0 * v[q] - 5.0 * v[q - st] + 4.0 * v[q - 2 * st] - v[q - 3 * st];
    else
      r = v[q - st] - 2.0 * v[q] + v[q + st];
    out[p] = r * ih2;
  }
  return out;
}

Vec3 grad(const Scalar& f) {
  Vec3 o;
  for (int a = 0; a < 3; ++a) o[a] = deriv(f, a);
  return o;
}

Scalar div(const Vec3& u) {
  Scalar o = deriv(u[0], 0);
  o += deriv(u[1], 1);
  o += deriv(u[2], 2);
  return o;
}

Vec3 rot(const Vec3& u) {
  Vec3 o;
  o[0] = deriv(u[2], 1) - deriv(u[1], 2);
  o[1] = deriv(u[0], 2) - deriv(u[2], 0);
  o[2] = deriv(u[1], 0) - deriv(u[0], 1);
  return o;
}

Scalar lap(const Scalar& f) {
  Scalar o = deriv2(f, 0);
  o += deriv2(f, 1);
  o += deriv2(f, 2);
  return o;
}

Vec3 lap(const Vec3& u) {
  Vec3 o;
  for (int i = 0; i < 3; ++i) o[i] = lap(u[i]);
  return o;
}

Ten3 jacobian(const Vec3& u) {
  Ten3 J;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) J.at(i, j) = deriv(u[i], j);
  return J;
}

Ten3 sym_grad(const Vec3& u) {
  Ten3 J = jacobian(u);
  Ten3 E;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) E.at(i, j) = 0.5 * (J.at(i, j) + J.at(j, i));
  return E;
}

Ten3 hessian(const Scalar& f) {
  Ten3 Hs;
  for (int a = 0; a < 3; ++a) Hs.at(a, a) = deriv2(f, a);
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      Hs.at(a, b) = deriv(deriv(f, a), b);
      Hs.at(b, a) = Hs.at(a, b);
    }
  return Hs;
}

Vec3 convect(const Vec3& w, const Vec3& v) { return matvec(jacobian(v), w); }

Vec3 div(const Ten3& A) {
  Vec3 o;
  for (int k = 0; k < 3; ++k) {
    o[k] = deriv(A.at(k, 0), 0);
    o[k] += deriv(A.at(k, 1), 1);
    o[k] += deriv(A.at(k, 2), 2);
  }
  return o;
}

ScalarSeries time_deriv(const ScalarSeries& f, double dt) {
  const int nt = static_cast<int>(f.size()) - 1;
  if (nt < 3) throw PreconditionError("time_deriv: need at least four time levels");
  ScalarSeries out;
  out.reserve(f.size());
  for (int m = 0; m <= nt; ++m) {
    StencilRow r = d1_row(m, nt, dt);
    Scalar s(f[m].g);
    for (int q = 0; q < 4; ++q) {
      const Scalar& src = f[m + r.off[q]];
      if (r.w[q] == 0.0) continue;
      for (std::size_t p = 0; p < s.size(); ++p) s[p] += r.w[q] * src[p];
    }
    out.push_back(std::move(s));
  }
  return out;
}

VecSeries time_deriv(const VecSeries& f, double dt) {
  VecSeries out(f.size());
  for (int c = 0; c < 3; ++c) {
    ScalarSeries comp;
    comp.reserve(f.size());
    for (const auto& v : f) comp.push_back(v[c]);
    ScalarSeries d = time_deriv(comp, dt);
    for (std::size_t m = 0; m < f.size(); ++m) out[m][c] = std::move(d[m]);
  }
  return out;
}

// ---------------------------------------------------------------- quadrature

LogValue operator+(const LogValue& a, const LogValue& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  double m = std::max(a.log_scale, b.log_scale);
  return {a.normalized * std::exp(a.log_scale - m) + b.normalized * std::exp(b.log_scale - m), m};
}

LogValue scaled(const LogValue& a, double log_factor) {
  return {a.normalized, a.log_scale + log_factor};
}

Mask full_mask(const Grid& g) { return Mask(g.npts(), 1); }

Mask box_mask(const Grid& g, const Box& b) {
  Mask m(g.npts(), 0);
  for (std::size_t p = 0; p < g.npts(); ++p) {
    auto c = g.ijk(p);
    m[p] = b.contains(c[0], c[1], c[2]) ? 1 : 0;
  }
  return m;
}

std::vector<double> trapezoid_weights(const Grid& g, const Mask& mask) {
  if (mask.size() != g.npts()) throw PreconditionError("trapezoid_weights: mask size mismatch");
  std::vector<double> w(g.npts(), 0.0);
  for (std::size_t p = 0; p < g.npts(); ++p) {
    if (!mask[p]) continue;
    auto c = g.ijk(p);
    double prod = 1.0;
    for (int a = 0; a < 3; ++a) {
      double wa = 0.0;
      const std::size_t st = g.stride(a);
      if (c[a] > 0 && mask[p - st]) wa += 0.5 * g.h(a);
      if (c[a] < g.n(a) && mask[p + st]) wa += 0.5 * g.h(a);
      prod *= wa;
    }
    w[p] = prod;
  }
  return w;
}

namespace {
bool any_set(const Mask& m) {
  return std::any_of(m.begin(), m.end(), [](char c) { return c != 0; });
}
}  // namespace

LogValue integrate_weighted(const Scalar& density, const Scalar& logw, const Mask& mask) {
  require_same_grid(density, logw, "integrate_weighted");
  if (!any_set(mask)) throw PreconditionError("integrate_weighted: empty region");
  const auto w = trapezoid_weights(*density.g, mask);
  double lmax = -std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < density.size(); ++p)
    if (mask[p] && density[p] != 0.0 && w[p] > 0.0) lmax = std::max(lmax, logw[p]);
  if (!std::isfinite(lmax)) return {0.0, 0.0};
  double acc = 0.0;
  for (std::size_t p = 0; p < density.size(); ++p)
    if (mask[p] && density[p] != 0.0 && w[p] > 0.0)
      acc += w[p] * density[p] * std::exp(logw[p] - lmax);
  return {acc, lmax};
}

LogValue integrate_weighted(const Scalar& density, const Mask& mask) {
  return integrate_weighted(density, Scalar(density.g, 0.0), mask);
}

LogValue integrate_weighted(const ScalarSeries& density, const ScalarSeries& logw,
                            const std::vector<Mask>& masks, double dt) {
  const std::size_t nm = density.size();
  if (logw.size() != nm || (masks.size() != nm && masks.size() != 1))
    throw PreconditionError("integrate_weighted: series length mismatch");
  auto mk = [&](std::size_t m) -> const Mask& { return masks.size() == 1 ? masks[0] : masks[m]; };
  bool any = false;
  for (std::size_t m = 0; m < nm; ++m) any = any || any_set(mk(m));
  if (!any) throw PreconditionError("integrate_weighted: empty region");
  const Grid& g = *density[0].g;
  std::vector<std::vector<double>> ws(nm);
  for (std::size_t m = 0; m < nm; ++m) ws[m] = trapezoid_weights(g, mk(m));
  auto wt = [&](std::size_t m, std::size_t p) {
    double w = 0.0;
    if (m > 0 && mk(m - 1)[p]) w += 0.5 * dt;
    if (m + 1 < nm && mk(m + 1)[p]) w += 0.5 * dt;
    return w;
  };
  double lmax = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < nm; ++m)
    for (std::size_t p = 0; p < g.npts(); ++p)
      if (mk(m)[p] && density[m][p] != 0.0 && ws[m][p] > 0.0 && wt(m, p) > 0.0)
        lmax = std::max(lmax, logw[m][p]);
  if (!std::isfinite(lmax)) return {0.0, 0.0};
  double acc = 0.0;
  for (std::size_t m = 0; m < nm; ++m)
    for (std::size_t p = 0; p < g.npts(); ++p)
      if (mk(m)[p] && density[m][p] != 0.0 && ws[m][p] > 0.0) {
        double w = ws[m][p] * wt(m, p);
        if (w > 0.0) acc += w * density[m][p] * std::exp(logw[m][p] - lmax);
      }
  return {acc, lmax};
}

namespace {
// Visits each point of a box face with its 2D trapezoid weight.
template <class Fn>
void for_face(const Grid& g, const Box& box, int face, Fn fn) {
  const int a = face_axis(face);
  const int b = (a + 1) % 3, c = (a + 2) % 3;
  const int fixed = face_is_hi(face) ? box.hi[a] : box.lo[a];
  for (int jb = box.lo[b]; jb <= box.hi[b]; ++jb) {
    double wb = (jb == box.lo[b] || jb == box.hi[b]) ? 0.5 * g.h(b) : g.h(b);
    if (box.lo[b] == box.hi[b]) wb = 0.0;
    for (int jc = box.lo[c]; jc <= box.hi[c]; ++jc) {
      double wc = (jc == box.lo[c] || jc == box.hi[c]) ? 0.5 * g.h(c) : g.h(c);
      if (box.lo[c] == box.hi[c]) wc = 0.0;
      std::array<int, 3> ix{};
      ix[a] = fixed;
      ix[b] = jb;
      ix[c] = jc;
      fn(g.idx(ix[0], ix[1], ix[2]), wb * wc);
    }
  }
}
}  // namespace

LogValue integrate_surface(const Scalar& density, const Scalar& logw, const Box& box,
                           const std::array<bool, 6>& faces) {
  require_same_grid(density, logw, "integrate_surface");
  const Grid& g = *density.g;
  double lmax = -std::numeric_limits<double>::infinity();
  for (int f = 0; f < 6; ++f) {
    if (!faces[f]) continue;
    for_face(g, box, f, [&](std::size_t p, double w) {
      if (w > 0.0 && density[p] != 0.0) lmax = std::max(lmax, logw[p]);
    });
  }
  if (!std::isfinite(lmax)) return {0.0, 0.0};
  double acc = 0.0;
  for (int f = 0; f < 6; ++f) {
    if (!faces[f]) continue;
    for_face(g, box, f, [&](std::size_t p, double w) {
      if (w > 0.0 && density[p] != 0.0) acc += w * density[p] * std::exp(logw[p] - lmax);
    });
  }
  return {acc, lmax};
}

LogValue integrate_surface(const ScalarSeries& density, const ScalarSeries& logw,
                           const Box& box, const std::array<bool, 6>& faces, double dt,
                           int m_lo, int m_hi) {
  const int nt = static_cast<int>(density.size()) - 1;
  if (m_hi < 0) m_hi = nt;
  if (m_lo < 0 || m_hi > nt || m_lo >= m_hi)
    throw PreconditionError("integrate_surface: bad time range");
  LogValue total;
  for (int m = m_lo; m <= m_hi; ++m) {
    double wt = (m == m_lo || m == m_hi) ? 0.5 * dt : dt;
    total = total + scaled(integrate_surface(density[m], logw[m], box, faces), std::log(wt));
  }
  return total;
}

double trace_half_norm_sq(const Scalar& p, const std::array<bool, 6>& faces) {
  const Grid& g = *p.g;
  const Box box = Box::full(g);
  const Scalar zero(p.g, 0.0);
  double l2 = 0.0, tan = 0.0;
  for (int f = 0; f < 6; ++f) {
    if (!faces[f]) continue;
    std::array<bool, 6> one{};
    one[f] = true;
    l2 += integrate_surface(p * p, zero, box, one).value();
    for (int b = 0; b < 3; ++b) {
      if (b == face_axis(f)) continue;
      // tangential derivative along the face only
      Scalar d(p.g, 0.0);
      const int a = face_axis(f);
      const int fixed = face_is_hi(f) ? g.n(a) : 0;
      for (std::size_t q = 0; q < g.npts(); ++q) {
        auto ix = g.ijk(q);
        if (ix[a] != fixed) continue;
        StencilRow r = d1_row(ix[b], g.n(b), g.h(b));
        double v = 0.0;
        for (int k = 0; k < 4; ++k)
          if (r.w[k] != 0.0) v += r.w[k] * p[q + static_cast<std::ptrdiff_t>(r.off[k]) * static_cast<std::ptrdiff_t>(g.stride(b))];
        d[q] = v;
      }
      tan += integrate_surface(d * d, zero, box, one).value();
    }
  }
  const double a = std::sqrt(l2);
  const double v = a + std::sqrt(std::sqrt(tan) * a);
  return v * v;
}

// ---------------------------------------------------------------- norms

Scalar partial(const Scalar& f, const std::array<int, 3>& gamma) {
  Scalar r = f;
  for (int a = 0; a < 3; ++a) {
    switch (gamma[a]) {
      case 0: break;
      case 1: r = deriv(r, a); break;
      case 2: r = deriv2(r, a); break;
      case 3: r = deriv(deriv2(r, a), a); break;
      default: throw PreconditionError("partial: derivative order above 3 per axis");
    }
  }
  return r;
}

double sobolev_sq(const Scalar& f, int order, const Mask& mask) {
  if (order < 0 || order > 3) throw PreconditionError("sobolev_norm: order must be in [0,3]");
  double total = 0.0;
  for (int a = 0; a <= order; ++a)
    for (int b = 0; a + b <= order; ++b)
      for (int c = 0; a + b + c <= order; ++c) {
        Scalar d = partial(f, {a, b, c});
        total += integrate_weighted(d * d, mask).value();
      }
  return total;
}

double sobolev_sq(const Vec3& f, int order, const Mask& mask) {
  return sobolev_sq(f[0], order, mask) + sobolev_sq(f[1], order, mask) +
         sobolev_sq(f[2], order, mask);
}

double sobolev_norm(const Scalar& f, int order, const Mask& mask) {
  return std::sqrt(sobolev_sq(f, order, mask));
}
double sobolev_norm(const Vec3& f, int order, const Mask& mask) {
  return std::sqrt(sobolev_sq(f, order, mask));
}

double sobolev_norm_st(const ScalarSeries& f, int k, int l, double dt) {
  if (l < 0 || l > 3) throw PreconditionError("sobolev_norm_st: time order must be in [0,3]");
  const Grid& g = *f[0].g;
  const Mask full = full_mask(g);
  const int nt = static_cast<int>(f.size()) - 1;
  auto time_trap = [&](const std::vector<double>& vals) {
    double s = 0.0;
    for (int m = 0; m <= nt; ++m) s += ((m == 0 || m == nt) ? 0.5 : 1.0) * dt * vals[m];
    return s;
  };
  std::vector<double> sp(f.size());
  for (int m = 0; m <= nt; ++m) sp[m] = sobolev_sq(f[m], k, full);
  double total = time_trap(sp);
  ScalarSeries cur = f;
  for (int j = 1; j <= l; ++j) {
    cur = time_deriv(cur, dt);
    for (int m = 0; m <= nt; ++m)
      sp[m] = integrate_weighted(cur[m] * cur[m], full).value();
    total += time_trap(sp);
  }
  return std::sqrt(total);
}

double sobolev_norm_st(const VecSeries& f, int k, int l, double dt) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    ScalarSeries comp;
    for (const auto& v : f) comp.push_back(v[c]);
    double n = sobolev_norm_st(comp, k, l, dt);
    s += n * n;
  }
  return std::sqrt(s);
}

}  // namespace cmhd

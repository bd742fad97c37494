/// @file grid.hpp
/// @brief Uniform collocated grid on the unit cube, fields, stencils and quadrature.
#ifndef CMHD_GRID_HPP
#define CMHD_GRID_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmhd {

/// Raised when a precondition on inputs is violated.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces an unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  int nx = 16;
  int ny = 16;
  int nz = 16;
  int nt = 32;
  double T = 1.0;
};

enum Face : int { XLo = 0, XHi = 1, YLo = 2, YHi = 3, ZLo = 4, ZHi = 5 };

inline int face_axis(int f) { return f / 2; }
inline bool face_is_hi(int f) { return (f % 2) == 1; }
std::string face_name(int f);

class Grid {
 public:
  explicit Grid(const GridSpec& spec);

  int n(int axis) const { return n_[axis]; }
  int np(int axis) const { return n_[axis] + 1; }
  double h(int axis) const { return h_[axis]; }
  int nt() const { return nt_; }
  double T() const { return T_; }
  double dt() const { return dt_; }
  std::size_t npts() const { return npts_; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  std::size_t idx(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * np(1) + j) * np(0) + i;
  }
  std::array<int, 3> ijk(std::size_t p) const {
    int i = static_cast<int>(p % np(0));
    std::size_t r = p / np(0);
    int j = static_cast<int>(r % np(1));
    int k = static_cast<int>(r / np(1));
    return {i, j, k};
  }
  double coord(int axis, int i) const { return i * h_[axis]; }
  std::array<double, 3> xyz(std::size_t p) const {
    auto c = ijk(p);
    return {coord(0, c[0]), coord(1, c[1]), coord(2, c[2])};
  }
  double t(int m) const { return m * dt_; }
  bool on_boundary(std::size_t p) const;
  bool on_face(std::size_t p, int face) const;
  bool same_as(const Grid& o) const;
  GridSpec spec() const { return spec_; }

 private:
  GridSpec spec_;
  std::array<int, 3> n_{};
  std::array<double, 3> h_{};
  std::array<std::size_t, 3> stride_{};
  int nt_ = 0;
  double T_ = 0.0, dt_ = 0.0;
  std::size_t npts_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Observation faces and their complement.
struct BoundaryPartition {
  std::array<bool, 6> gamma{};
  std::vector<char> gamma_mask;      ///< boundary points on at least one Gamma face
  std::vector<char> rest_mask;       ///< boundary points on no Gamma face
  std::vector<std::array<double, 3>> normal;  ///< averaged outward normal, zero inside
};

std::pair<GridPtr, BoundaryPartition> build_grid(const GridSpec& spec,
                                                 const std::array<bool, 6>& gamma);
/// Default observation boundary: every face except z = 0.
std::array<bool, 6> default_gamma();

// ---------------------------------------------------------------- fields

struct Scalar {
  GridPtr g;
  std::vector<double> v;

  Scalar() = default;
  explicit Scalar(GridPtr grid, double fill = 0.0)
      : g(std::move(grid)), v(g->npts(), fill) {}

  double& operator[](std::size_t p) { return v[p]; }
  double operator[](std::size_t p) const { return v[p]; }
  std::size_t size() const { return v.size(); }
};

struct Vec3 {
  std::array<Scalar, 3> c;
  Vec3() = default;
  explicit Vec3(const GridPtr& g, double fill = 0.0) : c{Scalar(g, fill), Scalar(g, fill), Scalar(g, fill)} {}
  Scalar& operator[](int i) { return c[i]; }
  const Scalar& operator[](int i) const { return c[i]; }
  const GridPtr& grid() const { return c[0].g; }
};

/// 3x3 tensor field stored row-major: (i, j) -> c[3 i + j].
struct Ten3 {
  std::array<Scalar, 9> c;
  Ten3() = default;
  explicit Ten3(const GridPtr& g, double fill = 0.0) {
    for (auto& s : c) s = Scalar(g, fill);
  }
  Scalar& at(int i, int j) { return c[3 * i + j]; }
  const Scalar& at(int i, int j) const { return c[3 * i + j]; }
  const GridPtr& grid() const { return c[0].g; }
};

using ScalarSeries = std::vector<Scalar>;
using VecSeries = std::vector<Vec3>;

using ScalarFn = std::function<double(double, double, double, double)>;
using VecFn = std::function<std::array<double, 3>(double, double, double, double)>;

Scalar sample(const GridPtr& g, const ScalarFn& f, double t = 0.0);
Vec3 sample(const GridPtr& g, const VecFn& f, double t = 0.0);
ScalarSeries sample_series(const GridPtr& g, const ScalarFn& f);
VecSeries sample_series(const GridPtr& g, const VecFn& f);

void require_same_grid(const Scalar& a, const Scalar& b, const char* where);
void require_finite(const Scalar& a, const char* what);

// Pointwise arithmetic.
Scalar operator+(const Scalar& a, const Scalar& b);
Scalar operator-(const Scalar& a, const Scalar& b);
Scalar operator-(const Scalar& a);
Scalar operator*(double s, const Scalar& a);
Scalar operator*(const Scalar& a, const Scalar& b);
Scalar& operator+=(Scalar& a, const Scalar& b);
Scalar& operator-=(Scalar& a, const Scalar& b);
Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a);
Vec3 operator*(double s, const Vec3& a);
Vec3 operator*(const Scalar& s, const Vec3& a);
Vec3& operator+=(Vec3& a, const Vec3& b);
Vec3& operator-=(Vec3& a, const Vec3& b);
Ten3 operator+(const Ten3& a, const Ten3& b);
Ten3 operator*(double s, const Ten3& a);
Ten3 operator*(const Scalar& s, const Ten3& a);

Scalar dot(const Vec3& a, const Vec3& b);
Scalar norm2(const Vec3& a);  ///< pointwise |a|^2
Scalar norm2(const Ten3& a);  ///< pointwise Frobenius |a|^2
Vec3 cross(const Vec3& a, const Vec3& b);
Ten3 outer(const Vec3& a, const Vec3& b);
Vec3 matvec(const Ten3& A, const Vec3& x);
Ten3 transpose(const Ten3& A);
Scalar det3(const Ten3& A);
Vec3 constant_vec(const GridPtr& g, const std::array<double, 3>& v);
/// Skew matrix with B x = x cross b.
Ten3 skew_of(const Vec3& b);

double max_abs(const Scalar& a);
double max_abs(const Vec3& a);
double max_abs(const Ten3& a);

// ---------------------------------------------------------------- stencils

/// First derivative along an axis: central inside, one-sided second order on faces.
Scalar deriv(const Scalar& f, int axis);
/// Second derivative along an axis: three-point inside, four-point one-sided on faces.
Scalar deriv2(const Scalar& f, int axis);

/// 1D stencil row for the first derivative at index i of a line with n+1 points.
struct StencilRow {
  int off[4];
  double w[4];
};
StencilRow d1_row(int i, int n, double h);

Vec3 grad(const Scalar& f);
Scalar div(const Vec3& u);
Vec3 rot(const Vec3& u);
Scalar lap(const Scalar& f);
Vec3 lap(const Vec3& u);
/// Jacobian J_ij = d_j u_i.
Ten3 jacobian(const Vec3& u);
Ten3 sym_grad(const Vec3& u);
Ten3 hessian(const Scalar& f);
/// (w . grad) v
Vec3 convect(const Vec3& w, const Vec3& v);
/// Row divergence: (div A)_k = sum_j d_j A_kj.
Vec3 div(const Ten3& A);

ScalarSeries time_deriv(const ScalarSeries& f, double dt);
VecSeries time_deriv(const VecSeries& f, double dt);

enum class DiffOp { Grad, Div, Rot, Laplacian, SymGrad, Hessian, Convect, TimeDeriv };

// ---------------------------------------------------------------- quadrature

/// Value represented as normalized * exp(log_scale).
struct LogValue {
  double normalized = 0.0;
  double log_scale = 0.0;
  double log() const {
    return normalized > 0.0 ? std::log(normalized) + log_scale
                            : -std::numeric_limits<double>::infinity();
  }
  double value() const { return normalized * std::exp(log_scale); }
  bool is_zero() const { return !(normalized > 0.0); }
};
LogValue operator+(const LogValue& a, const LogValue& b);
LogValue scaled(const LogValue& a, double log_factor);

using Mask = std::vector<char>;
Mask full_mask(const Grid& g);

/// Per-point trapezoid weights for a spatial mask (1D runs along each axis).
std::vector<double> trapezoid_weights(const Grid& g, const Mask& mask);

/// sum of density * exp(logw - max logw) * trapezoid weight over the mask.
LogValue integrate_weighted(const Scalar& density, const Scalar& logw, const Mask& mask);
LogValue integrate_weighted(const Scalar& density, const Mask& mask);
/// Space-time version: masks per time slice; time direction also trapezoid.
LogValue integrate_weighted(const ScalarSeries& density, const ScalarSeries& logw,
                            const std::vector<Mask>& masks, double dt);

/// Axis-aligned index box, inclusive bounds.
struct Box {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{0, 0, 0};
  static Box full(const Grid& g) { return Box{{0, 0, 0}, {g.n(0), g.n(1), g.n(2)}}; }
  bool contains(int i, int j, int k) const {
    return i >= lo[0] && i <= hi[0] && j >= lo[1] && j <= hi[1] && k >= lo[2] && k <= hi[2];
  }
};
Mask box_mask(const Grid& g, const Box& b);

/// Surface integral over chosen faces of a box (2D trapezoid per face).
LogValue integrate_surface(const Scalar& density, const Scalar& logw, const Box& box,
                           const std::array<bool, 6>& faces);
LogValue integrate_surface(const ScalarSeries& density, const ScalarSeries& logw,
                           const Box& box, const std::array<bool, 6>& faces, double dt,
                           int m_lo = 0, int m_hi = -1);

/// Surrogate for the squared H^{1/2} norm of a boundary trace on the chosen faces of the
/// full box: (|p|_{L2} + |grad_tan p|_{L2}^{1/2} |p|_{L2}^{1/2})^2. Only tangential
/// derivatives are taken, so no interior values are read.
double trace_half_norm_sq(const Scalar& p, const std::array<bool, 6>& faces);

// ---------------------------------------------------------------- norms

/// Sum over multi-indices |gamma| <= order of the integrated squared derivative.
double sobolev_sq(const Scalar& f, int order, const Mask& mask);
double sobolev_sq(const Vec3& f, int order, const Mask& mask);
double sobolev_norm(const Scalar& f, int order, const Mask& mask);
double sobolev_norm(const Vec3& f, int order, const Mask& mask);
/// H^{k,l}(Q): space derivatives up to k plus time derivatives up to l.
double sobolev_norm_st(const ScalarSeries& f, int k, int l, double dt);
double sobolev_norm_st(const VecSeries& f, int k, int l, double dt);

/// Mixed partial d^gamma f, gamma_a <= 3.
Scalar partial(const Scalar& f, const std::array<int, 3>& gamma);

}  // namespace cmhd

#endif  // CMHD_GRID_HPP

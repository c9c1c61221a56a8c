#pragma once

// Convex bodies, structured (full or axisymmetric) grids with graded axes, the
// convex ring E_R(0) \ B_eps(x0), node classification, and the reduction of a
// general quadratic problem to the diagonal frame.

#include "khlab/common.hpp"
#include "khlab/symcore.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

namespace khlab {

// ---------------------------------------------------------------- bodies

/// Bounded convex body. level() is negative inside, zero on the boundary.
class ConvexBody {
 public:
  virtual ~ConvexBody() = default;
  virtual int dim() const = 0;
  virtual double level(const Point& x) const = 0;
  virtual double support(const Point& u) const = 0;
  /// Boundary point with outer normal u (u of unit length).
  virtual Point boundary_point(const Point& u) const = 0;
  /// Fraction theta in (0, 1] where the segment a -> b first meets the boundary;
  /// a and b must lie on opposite sides.
  virtual double crossing(const Point& a, const Point& b) const {
    const bool a_in = level(a) < 0.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      ((level(a + mid * (b - a)) < 0.0) == a_in ? lo : hi) = mid;
    }
    return hi;
  }
  bool contains(const Point& x) const { return level(x) < 0.0; }
  /// Largest r and smallest R with B_r(0) in the body and the body in B_R(0),
  /// estimated from the support function on `dirs` sample directions.
  std::pair<double, double> sandwich_radii(int dirs = 2000) const;
};

namespace detail {

/// Smallest root in (0, 1] of |a + t(b - a) - c|_M^2 = rhs along a segment, where
/// q(t) = A t^2 + B t + C and C - rhs changes sign on [0, 1].
inline double segment_root(double qa, double qb, double qc) {
  if (std::abs(qa) < 1e-300) return std::clamp(-qc / qb, 0.0, 1.0);
  const double disc = std::max(0.0, qb * qb - 4 * qa * qc);
  const double sq = std::sqrt(disc);
  // numerically stable pair of roots
  const double q = -0.5 * (qb + (qb >= 0 ? sq : -sq));
  double r1 = q / qa;
  double r2 = q != 0.0 ? qc / q : r1;
  if (r1 > r2) std::swap(r1, r2);
  if (r1 >= 0.0 && r1 <= 1.0) return r1;
  return std::clamp(r2, 0.0, 1.0);
}

}  // namespace detail

class Ball final : public ConvexBody {
 public:
  Ball(Point center, double radius) : c_(std::move(center)), r_(radius) {
    require(r_ > 0.0, ErrorKind::invalid_argument, "Ball: radius must be positive");
  }
  int dim() const override { return static_cast<int>(c_.size()); }
  const Point& center() const { return c_; }
  double radius() const { return r_; }
  double level(const Point& x) const override { return (x - c_).norm() - r_; }
  double support(const Point& u) const override { return c_.dot(u) + r_ * u.norm(); }
  Point boundary_point(const Point& u) const override { return c_ + r_ * u.normalized(); }
  double crossing(const Point& a, const Point& b) const override {
    const Point d = b - a;
    const Point e = a - c_;
    return detail::segment_root(d.squaredNorm(), 2 * e.dot(d), e.squaredNorm() - r_ * r_);
  }

 private:
  Point c_;
  double r_;
};

/// E = {x : (x - c)^T A (x - c) / 2 < R} with A symmetric positive definite.
class Ellipsoid final : public ConvexBody {
 public:
  Ellipsoid(Point center, Matrix A, double level_R) : c_(std::move(center)), A_(std::move(A)), R_(level_R) {
    require(R_ > 0.0, ErrorKind::invalid_argument, "Ellipsoid: level must be positive");
    require(A_.rows() == c_.size() && A_.cols() == c_.size(), ErrorKind::invalid_argument,
            "Ellipsoid: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (A_ + A_.transpose()));
    require(eig.eigenvalues().minCoeff() > 0.0, ErrorKind::invalid_argument, "Ellipsoid: A must be positive definite");
    Q_ = eig.eigenvectors();
    semi_ = (2.0 * R_ / eig.eigenvalues().array()).sqrt().matrix();
    Ainv_ = Q_ * semi_.cwiseAbs2().asDiagonal() * Q_.transpose() / (2.0 * R_);
  }

  static Ellipsoid from_semi_axes(Point center, const Point& semi_axes) {
    Matrix A = Matrix::Zero(center.size(), center.size());
    for (Eigen::Index i = 0; i < center.size(); ++i) A(i, i) = 1.0 / (semi_axes[i] * semi_axes[i]);
    return Ellipsoid(std::move(center), A, 0.5);
  }

  int dim() const override { return static_cast<int>(c_.size()); }
  const Point& center() const { return c_; }
  const Matrix& A() const { return A_; }
  double R() const { return R_; }
  const Point& semi_axes() const { return semi_; }

  double quadratic(const Point& x) const {
    const Point d = x - c_;
    return 0.5 * d.dot(A_ * d);
  }
  double level(const Point& x) const override { return quadratic(x) - R_; }
  double support(const Point& u) const override { return c_.dot(u) + std::sqrt(2.0 * R_ * u.dot(Ainv_ * u)); }
  Point boundary_point(const Point& u) const override {
    const Point w = Ainv_ * u;
    return c_ + std::sqrt(2.0 * R_ / u.dot(w)) * w;
  }
  double crossing(const Point& a, const Point& b) const override {
    const Point d = b - a;
    const Point e = a - c_;
    return detail::segment_root(0.5 * d.dot(A_ * d), e.dot(A_ * d), 0.5 * e.dot(A_ * e) - R_);
  }

  /// Euclidean distance from x to the body (zero inside).
  double distance(const Point& x) const {
    const Point y = Q_.transpose() * (x - c_);
    double g = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) g += (y[i] / semi_[i]) * (y[i] / semi_[i]);
    if (g <= 1.0) return 0.0;
    // closest point z_i = e_i^2 y_i / (e_i^2 + t); t solves sum (e_i y_i / (e_i^2 + t))^2 = 1
    auto f = [&](double t) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double q = semi_[i] * y[i] / (semi_[i] * semi_[i] + t);
        s += q * q;
      }
      return s - 1.0;
    };
    double lo = 0.0, hi = y.norm() * semi_.maxCoeff();
    while (f(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) > 0.0 ? lo : hi) = mid;
    }
    const double t = 0.5 * (lo + hi);
    double dist2 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double z = semi_[i] * semi_[i] * y[i] / (semi_[i] * semi_[i] + t);
      dist2 += (y[i] - z) * (y[i] - z);
    }
    return std::sqrt(dist2);
  }

  /// Minkowski gauge: < 1 inside, 1 on the boundary.
  double gauge(const Point& x) const { return std::sqrt(quadratic(x) / R_); }

 private:
  Point c_;
  Matrix A_, Q_, Ainv_;
  double R_;
  Point semi_;
};

/// Omega_t = (1 - t) Omega_0 + t Omega_1 for a ball and an ellipsoid.
class MinkowskiBody final : public ConvexBody {
 public:
  MinkowskiBody(Ball omega0, Ellipsoid omega1, double t) : b_(std::move(omega0)), e_(std::move(omega1)), t_(t) {
    require(t_ >= 0.0 && t_ <= 1.0, ErrorKind::invalid_argument, "minkowski_interpolant: t outside [0, 1]");
    require(b_.dim() == e_.dim(), ErrorKind::invalid_argument, "minkowski_interpolant: dimension mismatch");
    require(b_.contains(Point::Zero(b_.dim())) && e_.contains(Point::Zero(e_.dim())), ErrorKind::invalid_argument,
            "minkowski_interpolant: both bodies must contain the origin");
  }
  int dim() const override { return b_.dim(); }
  double t() const { return t_; }

  double support(const Point& u) const override { return (1.0 - t_) * b_.support(u) + t_ * e_.support(u); }
  Point boundary_point(const Point& u) const override {
    const Point un = u.normalized();
    return (1.0 - t_) * b_.boundary_point(un) + t_ * e_.boundary_point(un);
  }
  /// Offset of the scaled, shifted ellipsoid t*Omega_1 + (1-t)c0 by (1-t)r.
  double level(const Point& x) const override {
    const double off = (1.0 - t_) * b_.radius();
    const Point y = x - (1.0 - t_) * b_.center();
    if (t_ == 0.0) return y.norm() - off;
    // point in t*E  <=>  point / t in E (E's centre scales too)
    const Point ys = y / t_;
    if (e_.contains(ys)) return off * (e_.gauge(ys) - 1.0) + t_ * (e_.gauge(ys) - 1.0) - off;
    return t_ * e_.distance(ys) - off;
  }

 private:
  Ball b_;
  Ellipsoid e_;
  double t_;
};

inline std::pair<double, double> ConvexBody::sandwich_radii(int dirs) const {
  const int n = dim();
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  double rmin = std::numeric_limits<double>::infinity();
  double rmax = 0.0;
  for (int i = 0; i < dirs + 2 * n; ++i) {
    Point u = Point::Zero(n);
    if (i < 2 * n) {
      u[i / 2] = (i % 2 == 0) ? 1.0 : -1.0;
    } else {
      for (int j = 0; j < n; ++j) u[j] = g(rng);
      u.normalize();
    }
    rmin = std::min(rmin, support(u));
    rmax = std::max(rmax, boundary_point(u).norm());
  }
  return {rmin, rmax};
}

/// Support-function interpolation of a ball and an ellipsoid.
inline MinkowskiBody minkowski_interpolant(const Ball& omega0, const Ellipsoid& omega1, double t) {
  return MinkowskiBody(omega0, omega1, t);
}

// ---------------------------------------------------------------- normalization

struct NormalizedProblem {
  Point Lambda;  // diagonal of the normalized matrix
  Matrix P;      // orthogonal, A = P^T diag(Lambda) P
  Point y0;      // minimizer -A^{-1} b
  double c_hat = 0.0;

  Point to_normalized(const Point& x) const { return P * (x - y0); }
  Point from_normalized(const Point& xh) const { return P.transpose() * xh + y0; }
  double value_normalized(const Point& xh) const { return 0.5 * xh.dot(Lambda.cwiseProduct(xh)) + c_hat; }
};

/// Reduces 1/2 x^T A x + b.x + c to 1/2 xh^T Lambda xh + c_hat with xh = P (x - y0).
inline NormalizedProblem normalize_problem(const Matrix& A, const Point& b, double c) {
  const auto n = A.rows();
  require(A.cols() == n && b.size() == n, ErrorKind::invalid_argument, "normalize_problem: dimension mismatch");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  require((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::invalid_argument,
          "normalize_problem: A is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(A);
  require(eig.eigenvalues().minCoeff() > 0.0, ErrorKind::invalid_argument, "normalize_problem: A is not positive definite");
  NormalizedProblem out;
  out.Lambda = eig.eigenvalues();
  out.P = eig.eigenvectors().transpose();
  const Point Ainv_b = eig.eigenvectors() * (out.Lambda.cwiseInverse().cwiseProduct(out.P * b));
  out.y0 = -Ainv_b;
  out.c_hat = c - 0.5 * b.dot(Ainv_b);
  return out;
}

// ---------------------------------------------------------------- grids

enum class GridMode { full, axisym };

inline const char* to_string(GridMode m) { return m == GridMode::full ? "full" : "axisym"; }

/// A focus of a graded axis: spacing `h` at coordinate `at`, growing linearly away from it.
struct AxisFocus {
  double at;
  double h;
};

/// Graded coordinates on [lo, hi] with local spacing
/// min(h_max, min_f (f.h + growth |x - f.at|)); every knot is a grid coordinate.
inline std::vector<double> graded_axis(double lo, double hi, const std::vector<AxisFocus>& foci, double growth,
                                       double h_max, std::vector<double> knots = {}) {
  require(hi > lo && h_max > 0.0, ErrorKind::invalid_argument, "graded_axis: bad range");
  require(foci.empty() || growth > 0.0, ErrorKind::invalid_argument, "graded_axis: growth must be positive");
  auto spacing = [&](double x) {
    double h = h_max;
    for (const auto& f : foci) h = std::min(h, f.h + growth * std::abs(x - f.at));
    return h;
  };
  knots.push_back(lo);
  knots.push_back(hi);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::remove_if(knots.begin(), knots.end(), [&](double k) { return k < lo || k > hi; }), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  std::vector<double> out{knots.front()};
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s], b = knots[s + 1];
    // march from both ends towards the middle so both knots get their local
    // spacing; the last cell ends up between 0.5 and 1.5 local steps
    std::vector<double> left{a}, right{b};
    for (;;) {
      const double hl = spacing(left.back() + 0.5 * spacing(left.back()));
      const double hr = spacing(right.back() - 0.5 * spacing(right.back()));
      if (right.back() - left.back() <= 1.5 * std::min(hl, hr)) break;
      if (hl <= hr)
        left.push_back(left.back() + hl);
      else
        right.push_back(right.back() - hr);
    }
    for (std::size_t i = 1; i < left.size(); ++i) out.push_back(left[i]);
    for (std::size_t i = right.size(); i-- > 0;) out.push_back(right[i]);
  }
  return out;
}

/// Equal cells of size at most h between consecutive knots (lo and hi included).
inline std::vector<double> uniform_axis(double lo, double hi, double h, std::vector<double> knots = {}) {
  require(hi > lo && h > 0.0, ErrorKind::invalid_argument, "uniform_axis: bad range");
  knots.push_back(lo);
  knots.push_back(hi);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::remove_if(knots.begin(), knots.end(), [&](double k) { return k < lo || k > hi; }), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  std::vector<double> out{knots.front()};
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    const double a = knots[s], b = knots[s + 1];
    const int cells = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    for (int i = 1; i < cells; ++i) out.push_back(a + (b - a) * i / cells);
    out.push_back(b);
  }
  return out;
}

/// Inserts midpoints; the old coordinates keep even indices.
inline std::vector<double> refine_axis(const std::vector<double>& axis) {
  std::vector<double> out;
  out.reserve(2 * axis.size());
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (i > 0) out.push_back(0.5 * (axis[i - 1] + axis[i]));
    out.push_back(axis[i]);
  }
  return out;
}

/// Tensor-product grid. Full mode: one axis per ambient coordinate. Axisymmetric
/// mode: axes (rho, z), rho >= 0 starting at 0, with z the last ambient coordinate
/// and the rotation acting on the first n - 1 coordinates.
class StructuredGrid {
 public:
  StructuredGrid() = default;

  static StructuredGrid full(std::vector<std::vector<double>> axes) {
    require(axes.size() >= 1 && static_cast<int>(axes.size()) <= kMaxDim, ErrorKind::invalid_argument,
            "StructuredGrid: bad dimension");
    StructuredGrid g;
    g.mode_ = GridMode::full;
    g.n_ = static_cast<int>(axes.size());
    g.axes_ = std::move(axes);
    g.finish();
    return g;
  }

  static StructuredGrid axisym(int n, std::vector<double> rho, std::vector<double> z) {
    require(n >= 3 && n <= kMaxDim, ErrorKind::invalid_argument, "StructuredGrid: n out of range");
    require(!rho.empty() && rho.front() == 0.0, ErrorKind::invalid_argument, "StructuredGrid: rho axis must start at 0");
    StructuredGrid g;
    g.mode_ = GridMode::axisym;
    g.n_ = n;
    g.axes_ = {std::move(rho), std::move(z)};
    g.finish();
    return g;
  }

  GridMode mode() const { return mode_; }
  int ambient_dim() const { return n_; }
  int dims() const { return static_cast<int>(axes_.size()); }
  const std::vector<double>& axis(int d) const { return axes_[static_cast<std::size_t>(d)]; }
  int extent(int d) const { return static_cast<int>(axes_[static_cast<std::size_t>(d)].size()); }
  std::size_t size() const { return size_; }
  std::size_t stride(int d) const { return strides_[static_cast<std::size_t>(d)]; }
  /// Number of symmetric copies of the rho direction (n - 2 in axisymmetric mode).
  int symmetry_multiplicity() const { return mode_ == GridMode::axisym ? n_ - 2 : 0; }

  int index_along(std::size_t node, int d) const {
    return static_cast<int>((node / strides_[static_cast<std::size_t>(d)]) %
                            axes_[static_cast<std::size_t>(d)].size());
  }
  std::vector<int> multi(std::size_t node) const {
    std::vector<int> m(axes_.size());
    for (int d = 0; d < dims(); ++d) m[static_cast<std::size_t>(d)] = index_along(node, d);
    return m;
  }
  std::size_t linear(const std::vector<int>& m) const {
    std::size_t idx = 0;
    for (int d = 0; d < dims(); ++d) idx += static_cast<std::size_t>(m[static_cast<std::size_t>(d)]) * stride(d);
    return idx;
  }

  /// Grid-space coordinates (length dims()).
  Point coords(std::size_t node) const {
    Point p(dims());
    for (int d = 0; d < dims(); ++d)
      p[d] = axes_[static_cast<std::size_t>(d)][static_cast<std::size_t>(index_along(node, d))];
    return p;
  }

  /// Maps grid-space coordinates to the ambient point.
  Point to_ambient(const Point& c) const {
    if (mode_ == GridMode::full) return c;
    Point x = Point::Zero(n_);
    x[0] = c[0];
    x[n_ - 1] = c[1];
    return x;
  }
  /// Ambient point to grid-space coordinates.
  Point from_ambient(const Point& x) const {
    if (mode_ == GridMode::full) return x;
    Point c(2);
    c[0] = x.head(n_ - 1).norm();
    c[1] = x[n_ - 1];
    return c;
  }
  Point ambient(std::size_t node) const { return to_ambient(coords(node)); }

  double min_spacing(int d) const {
    const auto& a = axes_[static_cast<std::size_t>(d)];
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < a.size(); ++i) h = std::min(h, a[i] - a[i - 1]);
    return h;
  }
  double max_spacing(int d) const {
    const auto& a = axes_[static_cast<std::size_t>(d)];
    double h = 0.0;
    for (std::size_t i = 1; i < a.size(); ++i) h = std::max(h, a[i] - a[i - 1]);
    return h;
  }
  double max_spacing() const {
    double h = 0.0;
    for (int d = 0; d < dims(); ++d) h = std::max(h, max_spacing(d));
    return h;
  }

  /// Midpoint refinement of every axis; node (i_1..i_d) maps to (2 i_1..2 i_d).
  StructuredGrid refined() const {
    std::vector<std::vector<double>> axes;
    for (const auto& a : axes_) axes.push_back(refine_axis(a));
    if (mode_ == GridMode::full) return full(std::move(axes));
    return axisym(n_, std::move(axes[0]), std::move(axes[1]));
  }

  /// Index on this grid of a node of the coarser grid it refines.
  std::size_t from_coarse(const StructuredGrid& coarse, std::size_t node) const {
    auto m = coarse.multi(node);
    for (int& i : m) i *= 2;
    return linear(m);
  }

  /// Cell containing grid-space point c: lower corner index per axis and local
  /// fractions; nullopt when outside.
  bool locate(const Point& c, std::vector<int>& lower) const {
    lower.resize(axes_.size());
    for (int d = 0; d < dims(); ++d) {
      const auto& a = axes_[static_cast<std::size_t>(d)];
      if (c[d] < a.front() || c[d] > a.back()) return false;
      auto it = std::upper_bound(a.begin(), a.end(), c[d]);
      int i = static_cast<int>(it - a.begin()) - 1;
      lower[static_cast<std::size_t>(d)] = std::clamp(i, 0, static_cast<int>(a.size()) - 2);
    }
    return true;
  }

 private:
  void finish() {
    for (const auto& a : axes_) {
      require(a.size() >= 2, ErrorKind::invalid_argument, "StructuredGrid: each axis needs two nodes");
      for (std::size_t i = 1; i < a.size(); ++i)
        require(a[i] > a[i - 1], ErrorKind::invalid_argument, "StructuredGrid: axis not increasing");
    }
    strides_.assign(axes_.size(), 1);
    for (int d = dims() - 2; d >= 0; --d)
      strides_[static_cast<std::size_t>(d)] = strides_[static_cast<std::size_t>(d) + 1] * axes_[static_cast<std::size_t>(d) + 1].size();
    size_ = strides_[0] * axes_[0].size();
  }

  GridMode mode_ = GridMode::full;
  int n_ = 0;
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------- domains

enum class NodeClass : std::uint8_t { interior, inner_adjacent, outer_adjacent, exterior, obstacle };

inline const char* to_string(NodeClass c) {
  switch (c) {
    case NodeClass::interior: return "interior";
    case NodeClass::inner_adjacent: return "inner-adjacent";
    case NodeClass::outer_adjacent: return "outer-adjacent";
    case NodeClass::exterior: return "exterior";
    case NodeClass::obstacle: return "obstacle";
  }
  return "?";
}

/// One boundary component of a computational domain. side(x) > 0 on the domain
/// side; crossing(a, b) returns theta in (0, 1] for a inside, b outside.
struct BoundaryPiece {
  bool inner = true;  // inner (obstacle) or outer (truncation) component
  std::function<double(const Point&)> side;
  std::function<double(const Point&, const Point&)> crossing;
};

inline BoundaryPiece outside_of(std::shared_ptr<const ConvexBody> body) {
  BoundaryPiece p;
  p.inner = true;
  p.side = [body](const Point& x) { return body->level(x); };
  p.crossing = [body](const Point& a, const Point& b) { return body->crossing(a, b); };
  return p;
}

inline BoundaryPiece inside_of(std::shared_ptr<const ConvexBody> body) {
  BoundaryPiece p;
  p.inner = false;
  p.side = [body](const Point& x) { return -body->level(x); };
  p.crossing = [body](const Point& a, const Point& b) { return body->crossing(a, b); };
  return p;
}

/// Labels of every node plus the signed boundary functions at the node.
struct NodeClassification {
  std::vector<NodeClass> labels;
  std::vector<double> phi_inner;  // inner boundary function (> 0 in the domain)
  std::vector<double> phi_outer;  // outer boundary function (< 0 in the domain)
  std::size_t count(NodeClass c) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), c));
  }
  bool active(std::size_t node) const {
    const auto c = labels[node];
    return c == NodeClass::interior || c == NodeClass::inner_adjacent || c == NodeClass::outer_adjacent;
  }
};

/// Classifies nodes against an inner and an outer boundary piece. A node is
/// boundary-adjacent when a neighbour in the axis or diagonal stencil lies across.
inline NodeClassification classify(const StructuredGrid& grid, const BoundaryPiece& inner, const BoundaryPiece& outer) {
  NodeClassification out;
  const std::size_t N = grid.size();
  out.labels.assign(N, NodeClass::interior);
  out.phi_inner.resize(N);
  out.phi_outer.resize(N);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(N); ++i) {
    const Point x = grid.ambient(static_cast<std::size_t>(i));
    out.phi_inner[static_cast<std::size_t>(i)] = inner.side(x);
    out.phi_outer[static_cast<std::size_t>(i)] = -outer.side(x);
    if (out.phi_inner[static_cast<std::size_t>(i)] <= 0.0)
      out.labels[static_cast<std::size_t>(i)] = NodeClass::obstacle;
    else if (out.phi_outer[static_cast<std::size_t>(i)] >= 0.0)
      out.labels[static_cast<std::size_t>(i)] = NodeClass::exterior;
  }
  const int D = grid.dims();
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(N); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    if (out.labels[i] != NodeClass::interior) continue;
    const auto m = grid.multi(i);
    bool near_in = false, near_out = false;
    // all 3^D - 1 neighbours
    std::vector<int> off(static_cast<std::size_t>(D), -1);
    for (;;) {
      bool zero = true, valid = true;
      std::vector<int> q = m;
      for (int d = 0; d < D; ++d) {
        const auto du = static_cast<std::size_t>(d);
        zero = zero && off[du] == 0;
        q[du] += off[du];
        if (grid.mode() == GridMode::axisym && d == 0 && q[du] < 0) q[du] = -q[du];
        if (q[du] < 0 || q[du] >= grid.extent(d)) valid = false;
      }
      if (!zero && valid) {
        const auto lab = out.labels[grid.linear(q)];
        near_in = near_in || lab == NodeClass::obstacle;
        near_out = near_out || lab == NodeClass::exterior;
      } else if (!zero) {
        near_out = true;  // grid edge acts as exterior
      }
      int d = 0;
      while (d < D && off[static_cast<std::size_t>(d)] == 1) off[static_cast<std::size_t>(d++)] = -1;
      if (d == D) break;
      ++off[static_cast<std::size_t>(d)];
    }
    if (near_in)
      out.labels[i] = NodeClass::inner_adjacent;
    else if (near_out)
      out.labels[i] = NodeClass::outer_adjacent;
  }
  return out;
}

struct RingOptions {
  double R0 = 0.0;                  // when > 0, enforce R > 3 R0
  bool enforce_standing = true;     // x0 in B_{1/2} \ {0}, 0 < eps < 1/2
  bool allow_x0_outside_half = false;
};

/// Omega_R^eps = E_R(0; A) \ closed B_eps(x0) on a structured grid.
class RingDomain {
 public:
  RingDomain(const SymSpec& spec, Point x0, double eps, double R, StructuredGrid grid, RingOptions opts = {})
      : spec_(spec), x0_(std::move(x0)), eps_(eps), R_(R), grid_(std::move(grid)), opts_(opts) {
    const int n = spec_.n;
    require(x0_.size() == n, ErrorKind::invalid_argument, "RingDomain: x0 has wrong dimension");
    require(grid_.ambient_dim() == n, ErrorKind::invalid_argument, "RingDomain: grid dimension differs from n");
    require(eps_ > 0.0 && R_ > 0.0, ErrorKind::invalid_argument, "RingDomain: eps and R must be positive");
    if (opts_.enforce_standing) {
      require(eps_ < 0.5, ErrorKind::invalid_argument, "RingDomain: need eps < 1/2");
      require(x0_.norm() > 0.0, ErrorKind::invalid_argument, "RingDomain: x0 must differ from the origin");
      require(opts_.allow_x0_outside_half || x0_.norm() < 0.5, ErrorKind::invalid_argument,
              "RingDomain: x0 must lie in B_1/2(0) (set allow_x0_outside_half to override)");
    }
    if (opts_.R0 > 0.0) require(R_ > 3.0 * opts_.R0, ErrorKind::invalid_argument, "RingDomain: need R > 3 R0");
    if (grid_.mode() == GridMode::axisym) {
      for (int i = 1; i < n - 1; ++i)
        require(std::abs(spec_.a[static_cast<std::size_t>(i)] - spec_.a[0]) <= 1e-14 * spec_.a[0],
                ErrorKind::invalid_argument, "RingDomain: axisymmetric mode needs a_1 = ... = a_{n-1}");
      require(x0_.head(n - 1).norm() == 0.0, ErrorKind::invalid_argument,
              "RingDomain: axisymmetric mode needs x0 on the symmetry axis");
    }
    inner_body_ = std::make_shared<Ball>(x0_, eps_);
    outer_body_ = std::make_shared<Ellipsoid>(Point::Zero(n), spec_.matrix(), R_);
  }

  const SymSpec& spec() const { return spec_; }
  const Point& x0() const { return x0_; }
  double eps() const { return eps_; }
  double R() const { return R_; }
  const StructuredGrid& grid() const { return grid_; }
  const RingOptions& options() const { return opts_; }
  const Ball& inner() const { return *inner_body_; }
  const Ellipsoid& outer() const { return *outer_body_; }
  BoundaryPiece inner_piece() const { return outside_of(inner_body_); }
  BoundaryPiece outer_piece() const { return inside_of(outer_body_); }

  /// Lower bound on the distance between the inner ball and the outer boundary.
  double separation() const {
    return std::sqrt(2.0 * R_ / spec_.lambda_max()) - x0_.norm() - eps_;
  }

  /// Same ring on a different grid.
  RingDomain with_grid(StructuredGrid g) const { return RingDomain(spec_, x0_, eps_, R_, std::move(g), opts_); }

 private:
  SymSpec spec_;
  Point x0_;
  double eps_, R_;
  StructuredGrid grid_;
  RingOptions opts_;
  std::shared_ptr<Ball> inner_body_;
  std::shared_ptr<Ellipsoid> outer_body_;
};

inline NodeClassification classify_nodes(const RingDomain& ring) {
  const double h = ring.grid().max_spacing();
  require(ring.separation() >= 4.0 * h, ErrorKind::domain_too_tight,
          "ring separation " + std::to_string(ring.separation()) + " below 4h = " + std::to_string(4.0 * h));
  auto c = classify(ring.grid(), ring.inner_piece(), ring.outer_piece());
  // the grid must cover the outer ellipsoid: every edge node lies outside
  const auto& g = ring.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    bool edge = false;
    for (int d = 0; d < g.dims(); ++d) {
      const int j = g.index_along(i, d);
      const bool axis_side = g.mode() == GridMode::axisym && d == 0 && j == 0;
      edge = edge || (!axis_side && (j == 0 || j + 1 == g.extent(d)));
    }
    require(!edge || c.labels[i] == NodeClass::exterior, ErrorKind::domain_too_tight,
            "grid does not cover the outer ellipsoid");
  }
  require(c.count(NodeClass::interior) > 0, ErrorKind::domain_too_tight, "ring has no interior nodes");
  return c;
}

}  // namespace khlab

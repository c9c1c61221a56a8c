#pragma once

// Point evaluation of fields for the analysis routines: analytic fields, and
// grid fields interpolated between nodes.

#include "khlab/common.hpp"
#include "khlab/hessian_solver.hpp"

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace khlab {

/// A scalar field in ambient coordinates. Values are NaN outside the field's domain.
class FieldView {
 public:
  virtual ~FieldView() = default;
  virtual int dim() const = 0;
  virtual double value(const Point& x) const = 0;
  virtual Point gradient(const Point& x) const = 0;
  virtual Matrix hessian(const Point& x) const = 0;
};

/// Field given by closed forms. Missing derivatives fall back to central differences.
class AnalyticField final : public FieldView {
 public:
  using Value = std::function<double(const Point&)>;
  using Gradient = std::function<Point(const Point&)>;
  using Hessian = std::function<Matrix(const Point&)>;

  AnalyticField(int n, Value f, Gradient g = {}, Hessian h = {})
      : n_(n), f_(std::move(f)), g_(std::move(g)), h_(std::move(h)) {}

  int dim() const override { return n_; }
  double value(const Point& x) const override { return f_(x); }
  Point gradient(const Point& x) const override {
    if (g_) return g_(x);
    const double s = 1e-5 * (1.0 + x.norm());
    Point g(n_);
    for (int i = 0; i < n_; ++i) {
      Point a = x, b = x;
      a[i] += s;
      b[i] -= s;
      g[i] = (f_(a) - f_(b)) / (2 * s);
    }
    return g;
  }
  Matrix hessian(const Point& x) const override {
    if (h_) return h_(x);
    const double s = 1e-4 * (1.0 + x.norm());
    Matrix H(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) {
        Point pp = x, pm = x, mp = x, mm = x;
        pp[i] += s, pp[j] += s;
        pm[i] += s, pm[j] -= s;
        mp[i] -= s, mp[j] += s;
        mm[i] -= s, mm[j] -= s;
        H(i, j) = (f_(pp) - f_(pm) - f_(mp) + f_(mm)) / (4 * s * s);
      }
    return H;
  }

 private:
  int n_;
  Value f_;
  Gradient g_;
  Hessian h_;
};

/// Grid field with C^1 cubic Hermite interpolation (finite-difference slopes) of
/// the nodal values and of the nodal derivative functionals. Cells whose
/// 4^D stencil leaves the active nodes fall back to multilinear interpolation.
/// Inside the inner body the extension constant is returned exactly.
class GridFieldView final : public FieldView {
 public:
  explicit GridFieldView(GridField f) : f_(std::move(f)) {
    const auto& d = *f_.disc;
    const auto& g = d.grid();
    const int D = g.dims();
    axisym_ = g.mode() == GridMode::axisym;
    // grid-space derivative channels: first(D), second(D), mixed(D(D-1)/2), [u_rho/rho]
    nch_ = 2 * D + D * (D - 1) / 2 + (axisym_ ? 1 : 0);
    ch_.assign(static_cast<std::size_t>(nch_), std::vector<double>(g.size(), std::numeric_limits<double>::quiet_NaN()));
    parity_.assign(static_cast<std::size_t>(nch_), 1);
    if (axisym_) {
      parity_[0] = -1;             // u_rho
      parity_[2 * D] = -1;         // u_rho,z
    }
    std::vector<int> feature(static_cast<std::size_t>(nch_), -1);
    for (int a = 0; a < D; ++a) {
      feature[static_cast<std::size_t>(a)] = d.first_feature(a);
      feature[static_cast<std::size_t>(D + a)] = d.second_feature(a);
    }
    int idx = 2 * D;
    for (int a = 0; a < D; ++a)
      for (int b = a + 1; b < D; ++b) feature[static_cast<std::size_t>(idx++)] = d.mixed_feature(a, b);
    if (axisym_) feature[static_cast<std::size_t>(idx)] = d.rho_feature();
    for (std::size_t k = 0; k < d.unknowns(); ++k) {
      const std::size_t node = d.node_of(k);
      for (int c = 0; c < nch_; ++c) {
        const int ft = feature[static_cast<std::size_t>(c)];
        if (ft < 0) continue;
        if (d.terms(k, ft).empty() && d.constant(k, ft) == 0.0 && c >= 2 * D && !(axisym_ && c == nch_ - 1)) continue;
        ch_[static_cast<std::size_t>(c)][node] = d.evaluate(k, ft, f_.unknowns);
      }
      // u_rho and u_rho,z vanish on the axis
      if (axisym_ && g.index_along(node, 0) == 0) {
        ch_[0][node] = 0.0;
        if (D > 1) ch_[static_cast<std::size_t>(2 * D)][node] = 0.0;
      }
    }
    ext_ = d.options().obstacle_value;
  }

  const GridField& field() const { return f_; }
  int dim() const override { return f_.grid().ambient_dim(); }

  /// True when x lies in the inner body (extension region).
  bool in_obstacle(const Point& x) const { return f_.disc->inner_piece().side(x) <= 0.0; }
  bool outside(const Point& x) const { return f_.disc->outer_piece().side(x) <= 0.0; }

  double value(const Point& x) const override {
    if (in_obstacle(x)) return ext_;
    if (outside(x)) return std::numeric_limits<double>::quiet_NaN();
    return interpolate(f_.nodal, 1, f_.grid().from_ambient(x));
  }

  Point gradient(const Point& x) const override {
    const int n = dim();
    if (in_obstacle(x)) return Point::Zero(n);
    const Point c = f_.grid().from_ambient(x);
    const int D = f_.grid().dims();
    Point gs(D);
    for (int a = 0; a < D; ++a) gs[a] = interpolate(ch_[static_cast<std::size_t>(a)], parity_[static_cast<std::size_t>(a)], c);
    return to_ambient_gradient(x, gs);
  }

  Matrix hessian(const Point& x) const override {
    const int n = dim();
    if (in_obstacle(x)) return Matrix::Zero(n, n);
    const Point c = f_.grid().from_ambient(x);
    std::vector<double> v(static_cast<std::size_t>(nch_));
    for (int k = 0; k < nch_; ++k) v[static_cast<std::size_t>(k)] = interpolate(ch_[static_cast<std::size_t>(k)], parity_[static_cast<std::size_t>(k)], c);
    return to_ambient_hessian(x, v);
  }

  /// Ambient gradient and Hessian at a node from its derivative functionals
  /// (NaN entries where a functional is missing).
  Point nodal_gradient(std::size_t node) const {
    const int D = f_.grid().dims();
    Point gs(D);
    for (int a = 0; a < D; ++a) gs[a] = ch_[static_cast<std::size_t>(a)][node];
    return to_ambient_gradient(f_.grid().ambient(node), gs);
  }
  Matrix nodal_hessian(std::size_t node) const {
    std::vector<double> v(static_cast<std::size_t>(nch_));
    for (int k = 0; k < nch_; ++k) v[static_cast<std::size_t>(k)] = ch_[static_cast<std::size_t>(k)][node];
    return to_ambient_hessian(f_.grid().ambient(node), v);
  }

  /// Interpolates a nodal array at grid-space point c.
  double interpolate(const std::vector<double>& nodal, int parity, const Point& c) const {
    const auto& g = f_.grid();
    const int D = g.dims();
    std::vector<int> lower;
    if (!g.locate(c, lower)) return std::numeric_limits<double>::quiet_NaN();
    std::array<Weights, kMaxDim> w{};
    for (int a = 0; a < D; ++a) w[static_cast<std::size_t>(a)] = cubic_weights(a, lower[static_cast<std::size_t>(a)], c[a]);
    // cubic tensor product over active nodes
    double sum = 0.0;
    bool ok = true;
    std::array<int, kMaxDim> it{};
    std::vector<int> m(static_cast<std::size_t>(D));
    const int total = 1 << (2 * D);
    for (int s = 0; s < total && ok; ++s) {
      int r = s;
      double wt = 1.0;
      for (int a = 0; a < D; ++a) {
        it[static_cast<std::size_t>(a)] = r % 4;
        r /= 4;
        const auto& wa = w[static_cast<std::size_t>(a)];
        const int j = it[static_cast<std::size_t>(a)];
        wt *= wa.w[static_cast<std::size_t>(j)];
        if (wa.reflected[static_cast<std::size_t>(j)] && parity < 0) wt = -wt;
        m[static_cast<std::size_t>(a)] = wa.idx[static_cast<std::size_t>(j)];
      }
      if (wt == 0.0) continue;
      bool missing = false;
      for (int a = 0; a < D; ++a) missing = missing || m[static_cast<std::size_t>(a)] < 0;
      if (missing) {
        ok = false;
        break;
      }
      const std::size_t node = g.linear(m);
      if (f_.disc->unknown_of(node) < 0 || std::isnan(nodal[node])) {
        ok = false;
        break;
      }
      sum += wt * nodal[node];
    }
    if (ok) return sum;
    // multilinear fallback on the cell corners
    sum = 0.0;
    for (int s = 0; s < (1 << D); ++s) {
      double wt = 1.0;
      for (int a = 0; a < D; ++a) {
        const auto& ax = g.axis(a);
        const int i = lower[static_cast<std::size_t>(a)];
        const double t = (c[a] - ax[static_cast<std::size_t>(i)]) / (ax[static_cast<std::size_t>(i + 1)] - ax[static_cast<std::size_t>(i)]);
        const int bit = (s >> a) & 1;
        wt *= bit ? t : 1.0 - t;
        m[static_cast<std::size_t>(a)] = i + bit;
      }
      if (wt == 0.0) continue;
      const double v = nodal[g.linear(m)];
      if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
      sum += wt * v;
    }
    return sum;
  }

 private:
  struct Weights {
    std::array<int, 4> idx{};
    std::array<double, 4> w{};
    std::array<bool, 4> reflected{};
  };

  // Cubic Hermite weights on nodes i-1..i+2 for the cell [x_i, x_{i+1}]; slopes are
  // three-point differences, one-sided at the grid edge, reflected through rho = 0.
  Weights cubic_weights(int a, int i, double x) const {
    const auto& ax = f_.grid().axis(a);
    const int N = static_cast<int>(ax.size());
    const bool reflect = axisym_ && a == 0;
    Weights W;
    auto coord = [&](int j) {
      if (j < 0 && reflect) return -ax[static_cast<std::size_t>(-j)];
      return ax[static_cast<std::size_t>(j)];
    };
    const double x0 = ax[static_cast<std::size_t>(i)], x1 = ax[static_cast<std::size_t>(i + 1)];
    const double h = x1 - x0;
    const double t = (x - x0) / h;
    const double H00 = 2 * t * t * t - 3 * t * t + 1, H10 = t * t * t - 2 * t * t + t;
    const double H01 = -2 * t * t * t + 3 * t * t, H11 = t * t * t - t * t;
    std::array<double, 4> w{0.0, H00, H01, 0.0};
    const bool has_m = i - 1 >= 0 || reflect;
    const bool has_p = i + 2 < N;
    // slope at x0
    if (has_m) {
      const double hm = x0 - coord(i - 1), hp = h;
      w[0] += h * H10 * (-hp / (hm * (hm + hp)));
      w[1] += h * H10 * ((hp - hm) / (hm * hp));
      w[2] += h * H10 * (hm / (hp * (hm + hp)));
    } else {
      w[1] -= H10;
      w[2] += H10;
    }
    if (has_p) {
      const double hm = h, hp = ax[static_cast<std::size_t>(i + 2)] - x1;
      w[1] += h * H11 * (-hp / (hm * (hm + hp)));
      w[2] += h * H11 * ((hp - hm) / (hm * hp));
      w[3] += h * H11 * (hm / (hp * (hm + hp)));
    } else {
      w[1] -= H11;
      w[2] += H11;
    }
    W.w = w;
    W.idx = {i - 1, i, i + 1, i + 2};
    if (!has_m) W.idx[0] = -1;
    if (!has_p) W.idx[3] = -1;
    if (i - 1 < 0 && reflect) {
      W.idx[0] = 1;
      W.reflected[0] = true;
    }
    return W;
  }

  Point to_ambient_gradient(const Point& x, const Point& gs) const {
    if (!axisym_) return gs;
    const int n = dim();
    Point g = Point::Zero(n);
    const Point e = radial_direction(x);
    g.head(n - 1) = gs[0] * e;
    g[n - 1] = gs[1];
    return g;
  }

  // v: channels u_rho, u_z, u_rhorho, u_zz, u_rhoz, u_rho/rho (axisym) or the full-grid layout
  Matrix to_ambient_hessian(const Point& x, const std::vector<double>& v) const {
    const int n = dim();
    Matrix H = Matrix::Zero(n, n);
    const int D = f_.grid().dims();
    if (!axisym_) {
      for (int a = 0; a < D; ++a) H(a, a) = v[static_cast<std::size_t>(D + a)];
      int idx = 2 * D;
      for (int a = 0; a < D; ++a)
        for (int b = a + 1; b < D; ++b, ++idx) H(a, b) = H(b, a) = v[static_cast<std::size_t>(idx)];
      return H;
    }
    const Point e = radial_direction(x);
    const double urr = v[2], uzz = v[3], urz = v[4], ur_over_r = v[5];
    for (int i = 0; i < n - 1; ++i)
      for (int j = 0; j < n - 1; ++j) H(i, j) = urr * e[i] * e[j] + ur_over_r * ((i == j ? 1.0 : 0.0) - e[i] * e[j]);
    for (int i = 0; i < n - 1; ++i) H(i, n - 1) = H(n - 1, i) = urz * e[i];
    H(n - 1, n - 1) = uzz;
    return H;
  }

  Point radial_direction(const Point& x) const {
    const int n = dim();
    Point e = x.head(n - 1);
    const double r = e.norm();
    if (r == 0.0) {
      e.setZero();
      e[0] = 1.0;
      return e;
    }
    return e / r;
  }

  GridField f_;
  bool axisym_ = false;
  int nch_ = 0;
  std::vector<std::vector<double>> ch_;
  std::vector<int> parity_;
  double ext_ = 0.0;
};

}  // namespace khlab

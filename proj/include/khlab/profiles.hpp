#pragma once

// Closed-form toolkit: the generalized symmetric subsolution, its asymptotic
// constant mu(alpha), the explicit radial solution, the quadratic supersolution,
// the barriers used for boundary gradient bands, and the glued subsolution.

#include "khlab/common.hpp"
#include "khlab/quadrature.hpp"
#include "khlab/symcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <vector>

namespace khlab {

inline constexpr double kDefaultQuadTol = 1e-10;

/// R0 = 100 * lambda_max(A).
inline double default_R0(const SymSpec& spec) { return 100.0 * spec.lambda_max(); }

/// Integrand (1 + alpha t^-p)^(1/k) of the subsolution profile.
inline double ubar_integrand(double t, double alpha, const SymSpec& spec) {
  return std::pow(1.0 + alpha * std::pow(t, -spec.decay_exponent()), 1.0 / spec.k);
}

/// (1 + alpha t^-p)^(1/k) - 1 without cancellation for small alpha t^-p.
inline double ubar_excess(double t, double alpha, const SymSpec& spec) {
  const double x = alpha * std::pow(t, -spec.decay_exponent());
  return std::expm1(std::log1p(x) / spec.k);
}

/// Subsolution profile for any s > 0 (negative below R0).
inline double ubar_extended(double s, double alpha, const SymSpec& spec, double R0,
                            double quad_tol = kDefaultQuadTol) {
  require(s > 0.0, ErrorKind::invalid_argument, "ubar: s must be positive");
  require(alpha >= 0.0 && R0 > 0.0, ErrorKind::invalid_argument, "ubar: need alpha >= 0 and R0 > 0");
  if (alpha == 0.0) return s - R0;
  // integrate the excess over 1 so the linear part is exact
  auto f = [&](double t) { return ubar_excess(t, alpha, spec); };
  const double lo = std::min(s, R0);
  const double hi = std::max(s, R0);
  double total = 0.0;
  // geometric panels keep the t^-p decay well resolved
  double a = lo;
  int panels = std::max(1, static_cast<int>(std::ceil(std::log2(hi / lo))));
  const double ratio = std::pow(hi / lo, 1.0 / panels);
  for (int j = 0; j < panels; ++j) {
    const double b = (j + 1 == panels) ? hi : a * ratio;
    total += integrate(f, a, b, quad_tol / panels).value;
    a = b;
  }
  const double excess = s >= R0 ? total : -total;
  return (s - R0) + excess;
}

/// ubar(s) = int_{R0}^{s} (1 + alpha t^-p)^(1/k) dt for s >= R0.
inline double ubar(double s, double alpha, const SymSpec& spec, double R0, double quad_tol = kDefaultQuadTol) {
  require(s >= R0, ErrorKind::invalid_argument, "ubar: s < R0");
  if (s == R0) return 0.0;
  return ubar_extended(s, alpha, spec, R0, quad_tol);
}

/// Bound on the error of replacing the tail integrand by its linear term beyond T.
inline double mu_tail_remainder(double T, double alpha, const SymSpec& spec) {
  const double p = spec.decay_exponent();
  const double k = spec.k;
  return 0.5 / k * (1.0 - 1.0 / k) * alpha * alpha * std::pow(T, 1.0 - 2.0 * p) / (2.0 * p - 1.0);
}

/// mu(alpha) = int_{R0}^{inf} ((1 + alpha t^-p)^(1/k) - 1) dt - R0.
/// Finite part by quadrature up to a cut T, the tail's linear term exactly; T is
/// bisected so the neglected remainder stays below quad_tol / 2.
inline double mu(double alpha, const SymSpec& spec, double R0, double quad_tol = kDefaultQuadTol) {
  require(alpha >= 0.0 && R0 > 0.0, ErrorKind::invalid_argument, "mu: need alpha >= 0 and R0 > 0");
  const double p = spec.decay_exponent();
  require(p > 1.0, ErrorKind::diverging_tail, "mu: exponent k/(2h_k) <= 1, tail integral diverges");
  if (alpha == 0.0) return -R0;
  double T = R0;
  if (mu_tail_remainder(R0, alpha, spec) > 0.5 * quad_tol) {
    double hi = R0;
    while (mu_tail_remainder(hi, alpha, spec) > 0.5 * quad_tol) hi *= 2.0;
    double lo = hi / 2.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = std::sqrt(lo * hi);
      (mu_tail_remainder(mid, alpha, spec) > 0.5 * quad_tol ? lo : hi) = mid;
    }
    T = hi;
  }
  double finite = 0.0;
  if (T > R0) {
    auto f = [&](double t) { return ubar_excess(t, alpha, spec); };
    const int panels = std::max(1, static_cast<int>(std::ceil(std::log2(T / R0))));
    const double ratio = std::pow(T / R0, 1.0 / panels);
    double a = R0;
    for (int j = 0; j < panels; ++j) {
      const double b = (j + 1 == panels) ? T : a * ratio;
      finite += integrate(f, a, b, 0.5 * quad_tol / panels).value;
      a = b;
    }
  }
  const double tail = alpha / spec.k * std::pow(T, 1.0 - p) / (p - 1.0);
  return finite + tail - R0;
}

inline bool is_isotropic(const SymSpec& spec, double tol = 1e-12) {
  for (double ai : spec.a)
    if (std::abs(ai - spec.a_star) > tol) return false;
  return true;
}

/// a* int_r^rho (s^k + alpha s^(k-n))^(1/k) ds, the radial solution for A = a* I.
inline double radial_solution(double rho, double r, double alpha, const SymSpec& spec,
                              double quad_tol = kDefaultQuadTol) {
  require(r > 0.0 && rho >= r, ErrorKind::invalid_argument, "radial_solution: need rho >= r > 0");
  require(alpha >= 0.0, ErrorKind::invalid_argument, "radial_solution: alpha < 0");
  require(is_isotropic(spec), ErrorKind::invalid_argument, "radial_solution: requires A = a* I");
  if (rho == r) return 0.0;
  if (alpha == 0.0) return spec.a_star * 0.5 * (rho * rho - r * r);
  const int k = spec.k;
  const int n = spec.n;
  auto f = [&](double s) { return std::pow(std::pow(s, k) + alpha * std::pow(s, k - n), 1.0 / k); };
  return spec.a_star * integrate(f, r, rho, quad_tol / spec.a_star).value;
}

/// Radial derivative of radial_solution.
inline double radial_solution_slope(double rho, double alpha, const SymSpec& spec) {
  return spec.a_star * std::pow(std::pow(rho, spec.k) + alpha * std::pow(rho, spec.k - spec.n), 1.0 / spec.k);
}

/// psi(x) = x^T A x / 2 + c.
inline double psi(const Point& x, const SymSpec& spec, double c) { return spec.quadratic(x) + c; }

/// a* (|x - x0|^2 - eps^2).
inline double inner_barrier(const Point& x, const Point& x0, double eps, const SymSpec& spec) {
  return spec.a_star * ((x - x0).squaredNorm() - eps * eps);
}

/// Shape of the outer barrier with unit constant, as a function of d = |x - x0|.
inline double outer_barrier_shape(double d, double eps, const SymSpec& spec) {
  const double n = spec.n;
  const double k = spec.k;
  const double e = 2.0 - n / k;
  if (2 * spec.k < spec.n) return 1.0 - std::pow(d / eps, e);
  if (2 * spec.k == spec.n) return 1.0 - std::log(d) / std::log(eps);
  return std::pow(d, e) - std::pow(eps, e);
}

/// The k-vs-n/2 three-case upper barrier; vanishes on the sphere |x - x0| = eps.
inline double outer_barrier(const Point& x, const Point& x0, double eps, const SymSpec& spec, double C) {
  const double d = (x - x0).norm();
  require(d > 0.0, ErrorKind::singular_point, "outer_barrier: x = x0");
  return C * outer_barrier_shape(d, eps, spec);
}

/// Boundary gradient constant C_eps for the three regimes of k against n/2.
inline double c_eps(double eps, const SymSpec& spec, double C) {
  require(eps > 0.0 && eps < 0.5, ErrorKind::invalid_argument, "c_eps: need 0 < eps < 1/2");
  const double n = spec.n;
  const double k = spec.k;
  if (2 * spec.k < spec.n) return C * (n / k - 2.0) / eps;
  if (2 * spec.k == spec.n) return C / (eps * std::abs(std::log(eps)));
  return C * (2.0 - n / k) * std::pow(eps, 1.0 - n / k);
}

/// Barrier constant C so that the outer barrier is >= 2 lambda_max + mu on |x| = 2.
inline double barrier_constant(const SymSpec& spec, const Point& x0, double eps, double mu_alpha) {
  const double dmin = 2.0 - x0.norm();
  require(dmin > eps, ErrorKind::invalid_argument, "barrier_constant: x0 too far from the origin");
  return (2.0 * spec.lambda_max() + mu_alpha) / outer_barrier_shape(dmin, eps, spec);
}

/// C^2 regularized maximum: equals max(a, b) when |a - b| >= width and is >= max(a, b)
/// everywhere. Its second derivative in a - b is a quadratic bump on (-width, width).
inline double smooth_max(double a, double b, double width) {
  const double d = a - b;
  if (std::abs(d) >= width) return std::max(a, b);
  const double w = width;
  const double phi = 0.75 / w * (0.5 * d * d - d * d * d * d / (12.0 * w * w)) + 3.0 * w / 16.0;
  return 0.5 * (a + b) + phi;
}

enum class ProfileKind { subsolution_ubar, radial_wangbao, supersolution_psi, inner_barrier, outer_barrier };

struct ProfileParams {
  SymSpec spec;
  double alpha = 0.0;
  double R0 = 1.0;
  double r = 1.0;  // inner radius (radial solution) or eps (barriers)
  Point x0;        // barrier centre; origin when empty
  double c = 0.0;  // psi constant
  double C = 1.0;  // outer barrier constant
};

/// An analytic profile evaluated pointwise. Immutable after construction.
class ProfileFn {
 public:
  ProfileFn(ProfileKind kind, ProfileParams params, double quad_tol = kDefaultQuadTol)
      : kind_(kind), p_(std::move(params)), quad_tol_(quad_tol) {
    if (p_.x0.size() == 0) p_.x0 = Point::Zero(p_.spec.n);
    require(quad_tol_ > 0.0, ErrorKind::invalid_argument, "ProfileFn: quad_tol must be positive");
  }

  ProfileKind kind() const { return kind_; }
  const ProfileParams& params() const { return p_; }
  double quad_tol() const { return quad_tol_; }

  double operator()(const Point& x) const {
    switch (kind_) {
      case ProfileKind::subsolution_ubar:
        return ubar_extended(p_.spec.quadratic(x), p_.alpha, p_.spec, p_.R0, quad_tol_);
      case ProfileKind::radial_wangbao:
        return radial_solution((x - p_.x0).norm(), p_.r, p_.alpha, p_.spec, quad_tol_);
      case ProfileKind::supersolution_psi: return psi(x, p_.spec, p_.c);
      case ProfileKind::inner_barrier: return inner_barrier(x, p_.x0, p_.r, p_.spec);
      case ProfileKind::outer_barrier: return outer_barrier(x, p_.x0, p_.r, p_.spec, p_.C);
    }
    return 0.0;
  }

 private:
  ProfileKind kind_;
  ProfileParams p_;
  double quad_tol_;
};

/// Pointwise gluing of two profiles by the regularized maximum.
inline double glue_subsolution(const Point& x, const ProfileFn& inner, const ProfileFn& outer,
                               double transition_width = 1.0) {
  return smooth_max(inner(x), outer(x), transition_width);
}

/// Cubic Hermite table of V(x) = V(x_ref) + int_{x_ref}^{x} f, using the exact
/// derivative f at the nodes.
class TabulatedProfile {
 public:
  TabulatedProfile() = default;

  TabulatedProfile(std::function<double(double)> deriv, double x_ref, double value_at_ref, double lo, double hi,
                   int nodes, bool log_spacing, double quad_tol)
      : log_(log_spacing) {
    require(hi > lo && nodes >= 2 && x_ref >= lo && x_ref <= hi, ErrorKind::invalid_argument,
            "TabulatedProfile: bad range");
    require(!log_spacing || lo > 0.0, ErrorKind::invalid_argument, "TabulatedProfile: log spacing needs lo > 0");
    x_.resize(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) {
      const double t = static_cast<double>(i) / (nodes - 1);
      x_[static_cast<std::size_t>(i)] = log_ ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
    }
    x_.front() = lo;
    x_.back() = hi;
    v_.assign(x_.size(), 0.0);
    d_.resize(x_.size());
    for (std::size_t i = 0; i < x_.size(); ++i) d_[i] = deriv(x_[i]);
    const double per = quad_tol / nodes;
    for (std::size_t i = 1; i < x_.size(); ++i) v_[i] = v_[i - 1] + integrate(deriv, x_[i - 1], x_[i], per).value;
    const double shift = value_at_ref - (x_ref == lo ? 0.0 : integrate(deriv, lo, x_ref, quad_tol).value);
    for (double& v : v_) v += shift;
  }

  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }

  double operator()(double x) const {
    require(x >= x_.front() * (1 - 1e-14) && x <= x_.back() * (1 + 1e-14), ErrorKind::invalid_argument,
            "TabulatedProfile: argument outside table");
    x = std::clamp(x, x_.front(), x_.back());
    std::size_t i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin());
    i = std::clamp<std::size_t>(i, 1, x_.size() - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * v_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * v_[i + 1] +
           (t3 - t2) * h * d_[i + 1];
  }

 private:
  bool log_ = false;
  std::vector<double> x_, v_, d_;
};

/// Tabulated subsolution profile on [s_lo, s_hi].
inline TabulatedProfile tabulate_ubar(double alpha, const SymSpec& spec, double R0, double s_lo, double s_hi,
                                      int nodes = 4000, double quad_tol = kDefaultQuadTol) {
  auto f = [alpha, spec](double t) { return ubar_integrand(t, alpha, spec); };
  const double ref = std::clamp(R0, s_lo, s_hi);
  const double at_ref = ref == R0 ? 0.0 : ubar_extended(ref, alpha, spec, R0, quad_tol);
  return TabulatedProfile(f, ref, at_ref, s_lo, s_hi, nodes, true, quad_tol);
}

/// Tabulated radial solution on [r, rho_hi].
inline TabulatedProfile tabulate_radial(double r, double alpha, const SymSpec& spec, double rho_hi,
                                        int nodes = 4000, double quad_tol = kDefaultQuadTol) {
  require(is_isotropic(spec), ErrorKind::invalid_argument, "tabulate_radial: requires A = a* I");
  auto f = [alpha, spec](double s) { return radial_solution_slope(s, alpha, spec); };
  return TabulatedProfile(f, r, 0.0, r, rho_hi, nodes, true, quad_tol);
}

namespace detail {

/// Deterministic unit directions: coordinate axes plus seeded Gaussian draws.
inline std::vector<Point> sample_directions(int n, int count, std::uint64_t seed = 20240611) {
  std::vector<Point> dirs;
  for (int i = 0; i < n; ++i) {
    Point e = Point::Zero(n);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  while (static_cast<int>(dirs.size()) < count) {
    Point v(n);
    for (int i = 0; i < n; ++i) v[i] = g(rng);
    const double nv = v.norm();
    if (nv > 1e-12) dirs.push_back(v / nv);
  }
  return dirs;
}

}  // namespace detail

/// Sampled separation margins of the two gluing inequalities (each must be >= 0).
struct SeparationMargins {
  double inner = 0.0;  // min over B_2 \ B_1 of (inner barrier - ubar) - 1
  double outer = 0.0;  // min over E_{3R0} \ E_{2R0} of (ubar - inner barrier) - 1
};

inline SeparationMargins separation_margins(double alpha, const SymSpec& spec, double R0, const Point& x0,
                                            double eps, int samples_per_dim = 64) {
  const int n = spec.n;
  const int ndirs = static_cast<int>(std::pow(samples_per_dim, std::min(n - 1, 2)));
  const auto dirs = detail::sample_directions(n, ndirs);
  SeparationMargins m{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};

  // B_2 \ B_1: s ranges over [lambda_min / 2, 2 lambda_max]
  const double s_lo = 0.5 * spec.lambda_min() * 0.999;
  const double s_hi = 2.0 * spec.lambda_max() * 1.001;
  const auto table = tabulate_ubar(alpha, spec, R0, s_lo, s_hi, 800);
  for (int i = 0; i < samples_per_dim; ++i) {
    const double r = 1.0 + static_cast<double>(i) / (samples_per_dim - 1);
    for (const auto& d : dirs) {
      const Point x = r * d;
      m.inner = std::min(m.inner, inner_barrier(x, x0, eps, spec) - table(spec.quadratic(x)) - 1.0);
    }
  }
  // E_{3R0} \ E_{2R0}: ubar depends on s only
  Point inv_sqrt_a(n);
  for (int i = 0; i < n; ++i) inv_sqrt_a[i] = 1.0 / std::sqrt(spec.a[static_cast<std::size_t>(i)]);
  for (int i = 0; i < samples_per_dim; ++i) {
    const double s = R0 * (2.0 + static_cast<double>(i) / (samples_per_dim - 1));
    const double us = ubar_extended(s, alpha, spec, R0);
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& d : dirs) {
      const Point x = std::sqrt(2.0 * s) * inv_sqrt_a.cwiseProduct(d);
      worst = std::max(worst, inner_barrier(x, x0, eps, spec));
    }
    m.outer = std::min(m.outer, us - worst - 1.0);
  }
  return m;
}

struct Alpha0Result {
  double alpha0 = 0.0;
  double c_star = 0.0;  // mu(alpha0)
  SeparationMargins margins;
};

/// Smallest alpha (bisection to 1e-3 relative) satisfying both sampled separation
/// inequalities and mu(alpha) >= 0.
inline Alpha0Result alpha0_search(const SymSpec& spec, double R0, const Point& x0, double eps) {
  require(R0 > 0.0 && eps > 0.0, ErrorKind::invalid_argument, "alpha0_search: need R0 > 0 and eps > 0");
  auto feasible = [&](double alpha) {
    if (mu(alpha, spec, R0, 1e-8) < 0.0) return false;
    const auto m = separation_margins(alpha, spec, R0, x0, eps);
    return m.inner >= 0.0 && m.outer >= 0.0;
  };
  double hi = 1.0;
  while (!feasible(hi)) {
    hi *= 2.0;
    require(hi <= 1e9, ErrorKind::search_failed, "alpha0_search: no alpha <= 1e9 satisfies the separation");
  }
  double lo = hi / 2.0;
  if (feasible(lo)) lo = 0.0;
  while (hi - lo > 1e-3 * hi) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  Alpha0Result out;
  out.alpha0 = hi;
  out.c_star = mu(hi, spec, R0);
  out.margins = separation_margins(hi, spec, R0, x0, eps);
  return out;
}

/// The glued subsolution: inner barrier inside B_1, ubar outside E_{3R0}, the
/// regularized maximum in between. Construction checks the separation conditions.
class GluedSubsolution {
 public:
  GluedSubsolution(const SymSpec& spec, double R0, double alpha, const Point& x0, double eps, double s_max,
                   double width = 1.0)
      : spec_(spec), R0_(R0), alpha_(alpha), x0_(x0), eps_(eps), width_(width) {
    const auto m = separation_margins(alpha, spec, R0, x0, eps);
    require(m.inner >= 0.0 && m.outer >= 0.0, ErrorKind::gluing_infeasible,
            "separation margins (" + std::to_string(m.inner) + ", " + std::to_string(m.outer) +
                ") negative; raise alpha");
    margins_ = m;
    table_ = tabulate_ubar(alpha, spec, R0, 0.5 * spec.lambda_min() * 0.99, std::max(s_max, 3.0 * R0) * 1.01);
  }

  double operator()(const Point& x) const {
    const double inner = inner_barrier(x, x0_, eps_, spec_);
    if (x.norm() < 1.0) return inner;
    const double outer = table_(spec_.quadratic(x));
    if (spec_.quadratic(x) > 3.0 * R0_) return outer;
    return smooth_max(inner, outer, width_);
  }

  /// ubar(s) from the table.
  double ubar_of_s(double s) const { return table_(s); }
  const SeparationMargins& margins() const { return margins_; }

 private:
  SymSpec spec_;
  double R0_, alpha_;
  Point x0_;
  double eps_, width_;
  SeparationMargins margins_;
  TabulatedProfile table_;
};

}  // namespace khlab

#pragma once

// Sampled convexity tests for level sets, the non-convexity witness on ring
// solutions, Gauss curvature of level sets, exterior asymptotics, and contours.

#include "khlab/common.hpp"
#include "khlab/geometry.hpp"
#include "khlab/interp.hpp"
#include "khlab/profiles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

namespace khlab {

// ---------------------------------------------------------------- convexity

enum class Verdict { convex_up_to_tol, non_convex };

inline const char* to_string(Verdict v) { return v == Verdict::convex_up_to_tol ? "convex-up-to-tol" : "non-convex"; }

struct Witness {
  Point p, q, m;          // segment ends and the worst segment point
  double up = 0.0, uq = 0.0, um = 0.0;
  double margin = 0.0;    // excess of u(m) over the level (sign-adjusted for superlevel sets)
};

struct ConvexityReport {
  double level = 0.0;
  bool superlevel = false;
  Verdict verdict = Verdict::convex_up_to_tol;
  std::optional<Witness> witness;
  double tol = 0.0;
  double worst_excess = 0.0;  // largest excess seen on any segment (may be negative)
  std::size_t pairs_tested = 0;
  std::size_t points_outside = 0;  // segment points where the field is undefined
  // counterexample_witness only
  double predicted_gap = 0.0;
  double measured_gap = 0.0;
};

struct SamplerOptions {
  int pairs = 20000;
  int points = 65;
  std::uint64_t seed = 0x5eed5eedULL;
  bool superlevel = false;
  Point box_lo, box_hi;  // sampling box (ambient); empty: derived from the grid field
  std::vector<std::pair<Point, Point>> targeted;
  Point straddle_center;  // optional: pairs on opposite sides of this point
  double straddle_radius = 0.0;
};

namespace detail {

inline double level_excess(double v, double t, bool superlevel) { return superlevel ? t - v : v - t; }

/// Bounding box of the grid nodes inside the (sub/super)level set.
inline std::pair<Point, Point> level_box(const GridFieldView& view, double t, bool superlevel) {
  const auto& g = view.field().grid();
  const int n = g.ambient_dim();
  Point lo = Point::Constant(n, std::numeric_limits<double>::infinity());
  Point hi = Point::Constant(n, -std::numeric_limits<double>::infinity());
  bool any = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = view.field().nodal[i];
    if (std::isnan(v) || level_excess(v, t, superlevel) > 0.0) continue;
    any = true;
    const Point c = g.coords(i);
    if (g.mode() == GridMode::axisym) {
      for (int a = 0; a < n - 1; ++a) {
        lo[a] = std::min(lo[a], -c[0]);
        hi[a] = std::max(hi[a], c[0]);
      }
      lo[n - 1] = std::min(lo[n - 1], c[1]);
      hi[n - 1] = std::max(hi[n - 1], c[1]);
    } else {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  require(any, ErrorKind::level_out_of_range, "convexity check: empty level set at t = " + std::to_string(t));
  return {lo, hi};
}

struct SegmentResult {
  double excess = -std::numeric_limits<double>::infinity();
  double s = 0.0;
  double value = 0.0;
  std::size_t outside = 0;
};

inline SegmentResult scan_segment(const FieldView& f, const Point& p, const Point& q, double t, bool superlevel,
                                  int points) {
  SegmentResult r;
  for (int j = 0; j < points; ++j) {
    const double s = static_cast<double>(j) / (points - 1);
    const double v = f.value(p + s * (q - p));
    if (std::isnan(v)) {
      ++r.outside;
      continue;
    }
    const double e = level_excess(v, t, superlevel);
    if (e > r.excess) {
      r.excess = e;
      r.s = s;
      r.value = v;
    }
  }
  return r;
}

}  // namespace detail

/// Sampled segment test of {u <= t} (or {u >= t}). Non-convex iff some segment
/// point between two members with margin tol exceeds the level by more than 3 tol.
inline ConvexityReport sublevel_convexity_check(const FieldView& f, double t, double tol, const SamplerOptions& opts = {}) {
  require(tol >= 0.0, ErrorKind::invalid_argument, "convexity check: tol must be >= 0");
  require(opts.points >= 3 && opts.pairs >= 0, ErrorKind::invalid_argument, "convexity check: bad sampler options");
  const int n = f.dim();
  const bool sup = opts.superlevel;
  Point lo = opts.box_lo, hi = opts.box_hi;
  if (lo.size() == 0) {
    const auto* gv = dynamic_cast<const GridFieldView*>(&f);
    require(gv != nullptr, ErrorKind::invalid_argument, "convexity check: analytic fields need a sampling box");
    std::tie(lo, hi) = detail::level_box(*gv, t - (sup ? -tol : tol), sup);
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto member = [&](const Point& x) {
    const double v = f.value(x);
    return !std::isnan(v) && detail::level_excess(v, t, sup) <= -tol;
  };
  // candidate members, uniform in the box
  const std::size_t want = static_cast<std::size_t>(std::max(2, 2 * opts.pairs));
  std::vector<Point> pool;
  std::vector<double> pool_excess;
  for (std::size_t draw = 0; pool.size() < want && draw < 200 * want; ++draw) {
    Point x(n);
    for (int a = 0; a < n; ++a) x[a] = lo[a] + (hi[a] - lo[a]) * U(rng);
    const double v = f.value(x);
    if (std::isnan(v) || detail::level_excess(v, t, sup) > -tol) continue;
    pool.push_back(x);
    pool_excess.push_back(detail::level_excess(v, t, sup));
  }
  require(!pool.empty() || !opts.targeted.empty(), ErrorKind::level_out_of_range,
          "convexity check: no sample inside the level set at t = " + std::to_string(t));
  // members closest to the level boundary
  std::vector<std::size_t> rim(pool.size());
  std::iota(rim.begin(), rim.end(), 0);
  std::sort(rim.begin(), rim.end(), [&](std::size_t a, std::size_t b) { return pool_excess[a] > pool_excess[b]; });
  rim.resize(std::max<std::size_t>(1, rim.size() / 5));

  std::vector<std::pair<Point, Point>> pairs = opts.targeted;
  if (!pool.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), pick_rim(0, rim.size() - 1);
    for (int i = 0; i < opts.pairs; ++i) {
      const int kind = i % 4;
      if (kind == 1) {
        pairs.emplace_back(pool[rim[pick_rim(rng)]], pool[rim[pick_rim(rng)]]);
      } else if (kind == 3 && opts.straddle_radius > 0.0) {
        // opposite sides of the obstacle
        Point d(n);
        std::normal_distribution<double> g;
        for (int a = 0; a < n; ++a) d[a] = g(rng);
        d.normalize();
        const double r1 = opts.straddle_radius * (1.0 + 3.0 * U(rng));
        const double r2 = opts.straddle_radius * (1.0 + 3.0 * U(rng));
        const Point p = opts.straddle_center + r1 * d, q = opts.straddle_center - r2 * d;
        if (member(p) && member(q))
          pairs.emplace_back(p, q);
        else
          pairs.emplace_back(pool[pick(rng)], pool[pick(rng)]);
      } else {
        pairs.emplace_back(pool[pick(rng)], pool[pick(rng)]);
      }
    }
  }
  std::vector<detail::SegmentResult> res(pairs.size());
#pragma omp parallel for schedule(dynamic, 64) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs.size()); ++i)
    res[static_cast<std::size_t>(i)] = detail::scan_segment(f, pairs[static_cast<std::size_t>(i)].first,
                                                            pairs[static_cast<std::size_t>(i)].second, t, sup, opts.points);
  ConvexityReport rep;
  rep.level = t;
  rep.superlevel = sup;
  rep.tol = tol;
  rep.pairs_tested = pairs.size();
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t i = 0; i < res.size(); ++i) {
    rep.points_outside += res[i].outside;
    if (res[i].excess > rep.worst_excess) {
      rep.worst_excess = res[i].excess;
      worst = i;
    }
  }
  if (!res.empty() && rep.worst_excess > 3.0 * tol) {
    rep.verdict = Verdict::non_convex;
    Witness w;
    w.p = pairs[worst].first;
    w.q = pairs[worst].second;
    w.m = w.p + res[worst].s * (w.q - w.p);
    w.up = f.value(w.p);
    w.uq = f.value(w.q);
    w.um = res[worst].value;
    w.margin = rep.worst_excess;
    rep.witness = w;
  }
  return rep;
}

/// The targeted triple p = 0, q = the inner-sphere point nearest the origin,
/// m = x0 / 2, at level max(u(p), u(q)). The predicted gap is psi(m) - psi(0).
inline ConvexityReport counterexample_witness(const FieldView& f, const SymSpec& spec, const Point& x0, double eps,
                                              double c, double tol_h) {
  const int n = spec.n;
  // concentric or nearly so: the triple degenerates and the predicted gap vanishes
  if (x0.norm() <= eps)
    throw Error(ErrorKind::inconclusive, "counterexample_witness: origin inside the obstacle, no triple");
  const Point p = Point::Zero(n);
  const Point q = x0 * (1.0 - eps / x0.norm());
  const Point m = 0.5 * x0;
  const double up = f.value(p), uq = f.value(q), um = f.value(m);
  require(!std::isnan(up) && !std::isnan(uq) && !std::isnan(um), ErrorKind::invalid_argument,
          "counterexample_witness: field undefined at the triple");
  ConvexityReport rep;
  rep.level = std::max(up, uq);
  rep.tol = tol_h;
  rep.pairs_tested = 1;
  rep.predicted_gap = psi(m, spec, c) - psi(p, spec, c);
  rep.measured_gap = um - rep.level;
  rep.worst_excess = rep.measured_gap;
  if (rep.measured_gap <= 3.0 * tol_h)
    throw Error(ErrorKind::inconclusive, "counterexample_witness: measured gap " + std::to_string(rep.measured_gap) +
                                             " not above 3 tol_h = " + std::to_string(3.0 * tol_h));
  rep.verdict = Verdict::non_convex;
  rep.witness = Witness{p, q, m, up, uq, um, rep.measured_gap};
  return rep;
}

// ---------------------------------------------------------------- curvature

struct CurvatureSample {
  Point x;
  double grad_norm = 0.0;
  double K = 0.0;
};

/// Cofactor matrix of a symmetric matrix.
inline Matrix cofactor(const Matrix& H) {
  const auto n = H.rows();
  Matrix C(n, n);
  if (n == 1) {
    C(0, 0) = 1.0;
    return C;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Matrix minor(n - 1, n - 1);
      for (Eigen::Index r = 0, rr = 0; r < n; ++r) {
        if (r == i) continue;
        for (Eigen::Index s = 0, ss = 0; s < n; ++s) {
          if (s == j) continue;
          minor(rr, ss++) = H(r, s);
        }
        ++rr;
      }
      C(i, j) = (((i + j) % 2) ? -1.0 : 1.0) * minor.determinant();
    }
  return C;
}

/// Gauss curvature of the level set through x from the gradient and Hessian.
inline CurvatureSample curvature_from_derivatives(const Point& x, const Point& g, const Matrix& H,
                                                  double grad_floor = 1e-8) {
  const int n = static_cast<int>(g.size());
  CurvatureSample s;
  s.x = x;
  s.grad_norm = g.norm();
  require(s.grad_norm > grad_floor, ErrorKind::critical_point, "gaussian_curvature: gradient below floor");
  const Matrix C = cofactor(H);
  const double q = g.dot(C * g);
  s.K = ((n - 1) % 2 ? -1.0 : 1.0) * q / std::pow(s.grad_norm, n + 1);
  return s;
}

inline CurvatureSample gaussian_curvature(const FieldView& f, const Point& x, double grad_floor = 1e-8) {
  const Point g = f.gradient(x);
  const Matrix H = f.hessian(x);
  require(g.allFinite() && H.allFinite(), ErrorKind::invalid_argument, "gaussian_curvature: field undefined at x");
  return curvature_from_derivatives(x, g, H, grad_floor);
}

/// Points on the sphere |x| = r: meridian samples for axisymmetric fields (with
/// the surface weights sin^{n-2}), quasi-uniform directions otherwise.
inline std::vector<std::pair<Point, double>> sphere_samples(int n, double r, bool axisym, int count) {
  std::vector<std::pair<Point, double>> out;
  if (axisym) {
    for (int i = 0; i < count; ++i) {
      const double th = M_PI * (i + 0.5) / count;
      Point x = Point::Zero(n);
      x[0] = r * std::sin(th);
      x[n - 1] = r * std::cos(th);
      out.emplace_back(x, std::pow(std::sin(th), n - 2));
    }
  } else {
    for (const auto& d : detail::sample_directions(n, count)) out.emplace_back(r * d, 1.0);
  }
  return out;
}

inline bool is_axisym_view(const FieldView& f) {
  const auto* gv = dynamic_cast<const GridFieldView*>(&f);
  return gv != nullptr && gv->field().grid().mode() == GridMode::axisym;
}

struct CurvatureShell {
  double radius = 0.0;
  double mean_scaled = 0.0;  // mean of K |x|^{n-1}
  double max_deviation = 0.0;  // max |K |x|^{n-1} - 1|
  double min_K = 0.0;
};

struct CurvatureReport {
  std::vector<CurvatureSample> samples;
  std::vector<CurvatureShell> shells;
  double fitted_exponent = 0.0;   // slope of log mean K against log |x|
  double fitted_constant = 0.0;
  double remainder_slope = 0.0;   // slope of log max|K |x|^{n-1} - 1| against log |x|
  double outer_scaled = 0.0;      // mean K |x|^{n-1} at the outermost shell
  double min_K = 0.0;
};

inline std::pair<double, double> log_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return {slope, std::exp((sy - slope * sx) / m)};
}

/// K |x|^{n-1} on shells; the leading coefficient is 1 independent of M.
inline CurvatureReport curvature_asymptotic_fit(const FieldView& f, const std::vector<double>& shells,
                                                int samples_per_shell = 64) {
  require(shells.size() >= 2, ErrorKind::invalid_argument, "curvature_asymptotic_fit: need two shells");
  const int n = f.dim();
  const bool axisym = is_axisym_view(f);
  CurvatureReport rep;
  rep.min_K = std::numeric_limits<double>::infinity();
  std::vector<double> radii, meanK, dev;
  for (double r : shells) {
    CurvatureShell sh;
    sh.radius = r;
    sh.min_K = std::numeric_limits<double>::infinity();
    double wsum = 0.0;
    for (const auto& [x, w] : sphere_samples(n, r, axisym, samples_per_shell)) {
      const auto s = gaussian_curvature(f, x);
      require(std::isfinite(s.K), ErrorKind::asymptotics_not_reached, "curvature_asymptotic_fit: undefined K");
      const double scaled = s.K * std::pow(r, n - 1);
      sh.mean_scaled += w * scaled;
      wsum += w;
      sh.max_deviation = std::max(sh.max_deviation, std::abs(scaled - 1.0));
      sh.min_K = std::min(sh.min_K, s.K);
      rep.samples.push_back(s);
    }
    sh.mean_scaled /= wsum;
    rep.min_K = std::min(rep.min_K, sh.min_K);
    rep.shells.push_back(sh);
    radii.push_back(r);
    meanK.push_back(sh.mean_scaled * std::pow(r, 1 - n));
    dev.push_back(std::max(sh.max_deviation, 1e-300));
  }
  require(rep.min_K > 0.0, ErrorKind::asymptotics_not_reached, "curvature_asymptotic_fit: K <= 0 on a shell");
  std::tie(rep.fitted_exponent, rep.fitted_constant) = log_fit(radii, meanK);
  rep.remainder_slope = log_fit(radii, dev).first;
  rep.outer_scaled = rep.shells.back().mean_scaled;
  require(std::abs(rep.outer_scaled - 1.0) < 0.5, ErrorKind::asymptotics_not_reached,
          "curvature_asymptotic_fit: K |x|^{n-1} far from 1 at the outermost shell");
  return rep;
}

// ---------------------------------------------------------------- exterior asymptotics

struct AsymptoticFit {
  double M = 0.0;
  double residual = 0.0;  // max relative spread of the shell values around M
  std::vector<double> radii, shell_M;
  double r_in = 0.0, r_out = 0.0;  // sandwiching radii of the body
  bool sandwich_ok = false;        // r^{n-2} <= M <= R^{n-2}
};

/// Spherical means of u |x|^{n-2}: for an exterior harmonic function decaying at
/// infinity, the spherical mean is exactly M |x|^{2-n}, so every shell estimates M.
inline AsymptoticFit fit_asymptotic_M(const FieldView& f, const std::vector<double>& radii, const ConvexBody& body,
                                      double tol = 2e-2, int samples = 256) {
  require(!radii.empty(), ErrorKind::invalid_argument, "fit_asymptotic_M: no radii");
  const int n = f.dim();
  const bool axisym = is_axisym_view(f);
  AsymptoticFit fit;
  fit.radii = radii;
  for (double r : radii) {
    double s = 0.0, w = 0.0;
    for (const auto& [x, wt] : sphere_samples(n, r, axisym, samples)) {
      const double v = f.value(x);
      require(!std::isnan(v), ErrorKind::asymptotics_not_reached, "fit_asymptotic_M: shell leaves the field");
      s += wt * v;
      w += wt;
    }
    fit.shell_M.push_back(s / w * std::pow(r, n - 2));
  }
  fit.M = std::accumulate(fit.shell_M.begin(), fit.shell_M.end(), 0.0) / static_cast<double>(fit.shell_M.size());
  for (double m : fit.shell_M) fit.residual = std::max(fit.residual, std::abs(m - fit.M) / fit.M);
  std::tie(fit.r_in, fit.r_out) = body.sandwich_radii();
  fit.sandwich_ok = std::pow(fit.r_in, n - 2) <= fit.M && fit.M <= std::pow(fit.r_out, n - 2);
  require(fit.residual <= tol, ErrorKind::asymptotics_not_reached,
          "fit_asymptotic_M: shell spread " + std::to_string(fit.residual) + " above " + std::to_string(tol));
  return fit;
}

// ---------------------------------------------------------------- superharmonicity

struct SuperharmonicReport {
  std::size_t probes = 0;
  double max_laplacian = -std::numeric_limits<double>::infinity();  // max of Delta_h psi_ms
  double tol_lap = 0.0;
  double min_K = std::numeric_limits<double>::infinity();
  std::vector<Point> nonpositive_K;  // probes with K <= 0
  bool passes = false;
};

namespace detail {

/// psi_ms = (|Du|^{n-3} K)^{1/(n-1)} at every active node (NaN where undefined).
inline std::vector<double> nodal_psi_ms(const GridFieldView& v, std::vector<double>* K_out = nullptr) {
  const auto& g = v.field().grid();
  const int n = g.ambient_dim();
  std::vector<double> out(g.size(), std::numeric_limits<double>::quiet_NaN());
  if (K_out) K_out->assign(g.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (v.field().disc->unknown_of(i) < 0) continue;
    const Point grad = v.nodal_gradient(i);
    const Matrix H = v.nodal_hessian(i);
    if (!grad.allFinite() || !H.allFinite() || grad.norm() <= 1e-12) continue;
    const auto s = curvature_from_derivatives(g.ambient(i), grad, H, 0.0);
    if (K_out) (*K_out)[i] = s.K;
    if (s.K <= 0.0) continue;
    out[i] = std::pow(std::pow(s.grad_norm, n - 3) * s.K, 1.0 / (n - 1));
  }
  return out;
}

/// Three-point Laplacian of a nodal array (axisymmetric: adds (n-2) psi_rho / rho).
inline double nodal_laplacian(const StructuredGrid& g, const std::vector<double>& a, std::size_t node) {
  const auto m = g.multi(node);
  const int D = g.dims();
  const bool axisym = g.mode() == GridMode::axisym;
  double lap = 0.0;
  for (int d = 0; d < D; ++d) {
    const auto& ax = g.axis(d);
    const int i = m[static_cast<std::size_t>(d)];
    if (i == 0 || i + 1 >= g.extent(d)) return std::numeric_limits<double>::quiet_NaN();
    auto q = m;
    q[static_cast<std::size_t>(d)] = i - 1;
    const double am = a[g.linear(q)];
    q[static_cast<std::size_t>(d)] = i + 1;
    const double ap = a[g.linear(q)];
    const double a0 = a[node];
    const double hm = ax[static_cast<std::size_t>(i)] - ax[static_cast<std::size_t>(i - 1)];
    const double hp = ax[static_cast<std::size_t>(i + 1)] - ax[static_cast<std::size_t>(i)];
    lap += 2.0 * (am / (hm * (hm + hp)) - a0 / (hm * hp) + ap / (hp * (hm + hp)));
    if (axisym && d == 0) {
      const double first = -hp / (hm * (hm + hp)) * am + (hp - hm) / (hm * hp) * a0 + hm / (hp * (hm + hp)) * ap;
      lap += (g.ambient_dim() - 2) * first / ax[static_cast<std::size_t>(i)];
    }
  }
  return lap;
}

}  // namespace detail

/// Delta_h psi_ms <= tol_lap on grid nodes with r_lo <= |x| <= r_hi. tol_lap is the
/// Richardson estimate from the refined field when one is given.
inline SuperharmonicReport superharmonicity_check(const GridFieldView& coarse, const GridFieldView* fine, double r_lo,
                                                  double r_hi) {
  SuperharmonicReport rep;
  std::vector<double> Kc;
  const auto psi_c = detail::nodal_psi_ms(coarse, &Kc);
  std::vector<double> psi_f;
  if (fine) psi_f = detail::nodal_psi_ms(*fine);
  const auto& g = coarse.field().grid();
  double tol_lap = 0.0;
  // three-point second differences are second order on uniform axes, first order on graded ones
  bool uniform = true;
  for (int d = 0; d < g.dims(); ++d) uniform = uniform && g.max_spacing(d) <= g.min_spacing(d) * (1.0 + 1e-9);
  const double richardson = uniform ? 4.0 / 3.0 : 2.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.ambient(i);
    const double r = x.norm();
    if (r < r_lo || r > r_hi || coarse.field().disc->unknown_of(i) < 0) continue;
    if (std::isnan(Kc[i])) continue;
    ++rep.probes;
    rep.min_K = std::min(rep.min_K, Kc[i]);
    if (Kc[i] <= 0.0) {
      rep.nonpositive_K.push_back(x);
      continue;
    }
    const double lap = detail::nodal_laplacian(g, psi_c, i);
    if (std::isnan(lap)) continue;
    rep.max_laplacian = std::max(rep.max_laplacian, lap);
    if (fine) {
      const auto& gf = fine->field().grid();
      const std::size_t j = gf.from_coarse(g, i);
      const double lf = detail::nodal_laplacian(gf, psi_f, j);
      if (!std::isnan(lf)) tol_lap = std::max(tol_lap, std::abs(lap - lf) * richardson);
    }
  }
  rep.tol_lap = tol_lap;
  rep.passes = rep.probes > 0 && rep.nonpositive_K.empty() && rep.max_laplacian <= rep.tol_lap;
  return rep;
}

// ---------------------------------------------------------------- contours

struct SlicePlane {
  Point origin, e1, e2;  // ambient point and two orthonormal directions
  double u_lo = -1.0, u_hi = 1.0, v_lo = -1.0, v_hi = 1.0;
  int nu = 201, nv = 201;
};

struct Polyline {
  int id = 0;
  std::vector<std::array<double, 2>> points;  // slice coordinates
  bool closed = false;
  int turn_sign_changes = 0;  // sign changes of the turning angle along the polyline
};

/// Marching squares on the slice; closed polylines are oriented counterclockwise.
inline std::vector<Polyline> extract_isocontour(const FieldView& f, double t, const SlicePlane& sp) {
  require(sp.nu >= 2 && sp.nv >= 2, ErrorKind::invalid_argument, "extract_isocontour: resolution too small");
  const int nu = sp.nu, nv = sp.nv;
  auto U = [&](int i) { return sp.u_lo + (sp.u_hi - sp.u_lo) * i / (nu - 1); };
  auto V = [&](int j) { return sp.v_lo + (sp.v_hi - sp.v_lo) * j / (nv - 1); };
  std::vector<double> val(static_cast<std::size_t>(nu) * nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i)
      val[static_cast<std::size_t>(j) * nu + i] = f.value(sp.origin + U(i) * sp.e1 + V(j) * sp.e2) - t;
  auto at = [&](int i, int j) { return val[static_cast<std::size_t>(j) * nu + i]; };
  // edge ids: 2 * node for the edge to (i+1, j), 2 * node + 1 for the edge to (i, j+1)
  auto edge_point = [&](long id) {
    const long node = id / 2;
    const int i = static_cast<int>(node % nu), j = static_cast<int>(node / nu);
    const int i2 = id % 2 ? i : i + 1, j2 = id % 2 ? j + 1 : j;
    const double a = at(i, j), b = at(i2, j2);
    const double s = a / (a - b);
    return std::array<double, 2>{U(i) + s * (U(i2) - U(i)), V(j) + s * (V(j2) - V(j))};
  };
  std::map<long, std::vector<long>> adj;
  auto link = [&](long a, long b) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  };
  for (int j = 0; j + 1 < nv; ++j)
    for (int i = 0; i + 1 < nu; ++i) {
      const double c0 = at(i, j), c1 = at(i + 1, j), c2 = at(i + 1, j + 1), c3 = at(i, j + 1);
      if (std::isnan(c0) || std::isnan(c1) || std::isnan(c2) || std::isnan(c3)) continue;
      const long n00 = static_cast<long>(j) * nu + i;
      const long bottom = 2 * n00, left = 2 * n00 + 1;
      const long top = 2 * (n00 + nu), right = 2 * (n00 + 1) + 1;
      const int code = (c0 > 0) | ((c1 > 0) << 1) | ((c2 > 0) << 2) | ((c3 > 0) << 3);
      switch (code) {
        case 0: case 15: break;
        case 1: case 14: link(left, bottom); break;
        case 2: case 13: link(bottom, right); break;
        case 3: case 12: link(left, right); break;
        case 4: case 11: link(right, top); break;
        case 6: case 9: link(bottom, top); break;
        case 7: case 8: link(left, top); break;
        case 5: case 10: {
          const bool center_pos = 0.25 * (c0 + c1 + c2 + c3) > 0;
          if ((code == 5) == center_pos) {
            link(left, top);
            link(bottom, right);
          } else {
            link(left, bottom);
            link(right, top);
          }
          break;
        }
      }
    }
  std::vector<Polyline> out;
  std::map<long, bool> used;
  auto walk = [&](long start) {
    Polyline pl;
    long prev = -1, cur = start;
    for (;;) {
      used[cur] = true;
      pl.points.push_back(edge_point(cur));
      long next = -1;
      for (long nb : adj[cur])
        if (nb != prev && !used[nb]) {
          next = nb;
          break;
        }
      if (next < 0) {
        // closed when the start is adjacent to the end
        for (long nb : adj[cur])
          if (nb == start && cur != start && pl.points.size() > 2) pl.closed = true;
        break;
      }
      prev = cur;
      cur = next;
    }
    return pl;
  };
  // open chains start at degree-one edges
  for (auto& [e, nbs] : adj)
    if (nbs.size() == 1 && !used[e]) out.push_back(walk(e));
  for (auto& [e, nbs] : adj)
    if (!used[e]) out.push_back(walk(e));
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& pl = out[k];
    pl.id = static_cast<int>(k);
    const std::size_t m = pl.points.size();
    if (pl.closed) {
      double area = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const auto& a = pl.points[i];
        const auto& b = pl.points[(i + 1) % m];
        area += a[0] * b[1] - b[0] * a[1];
      }
      if (area < 0) std::reverse(pl.points.begin(), pl.points.end());
    }
    // turning angles, on a resampling at two cell widths so that short
    // marching-squares segments do not contribute noise
    const double spacing = 2.0 * std::max((sp.u_hi - sp.u_lo) / (sp.nu - 1), (sp.v_hi - sp.v_lo) / (sp.nv - 1));
    std::vector<std::array<double, 2>> rs;
    {
      const std::size_t segs = pl.closed ? m : (m >= 1 ? m - 1 : 0);
      double carry = 0.0;
      if (m > 0) rs.push_back(pl.points[0]);
      for (std::size_t i = 0; i < segs; ++i) {
        const auto& a = pl.points[i];
        const auto& b = pl.points[(i + 1) % m];
        const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
        double at = spacing - carry;
        while (at <= len) {
          const double t = at / len;
          rs.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
          at += spacing;
        }
        carry = len - (at - spacing);
      }
      if (pl.closed && rs.size() > 1 && carry < 0.5 * spacing) rs.pop_back();  // avoid a near-duplicate of the start
    }
    std::vector<int> signs;
    const std::size_t r = rs.size();
    const std::size_t last = pl.closed ? r : (r >= 2 ? r - 2 : 0);
    for (std::size_t i = 0; i < last && r >= 3; ++i) {
      const auto& a = rs[i];
      const auto& b = rs[(i + 1) % r];
      const auto& c = rs[(i + 2) % r];
      const double ux = b[0] - a[0], uy = b[1] - a[1], wx = c[0] - b[0], wy = c[1] - b[1];
      const double cr = ux * wy - uy * wx;
      const double scale = std::hypot(ux, uy) * std::hypot(wx, wy);
      if (std::abs(cr) > 1e-6 * scale) signs.push_back(cr > 0 ? 1 : -1);
    }
    for (std::size_t i = 0; i + 1 < signs.size(); ++i)
      if (signs[i] != signs[i + 1]) ++pl.turn_sign_changes;
    if (pl.closed && signs.size() > 1 && signs.front() != signs.back()) ++pl.turn_sign_changes;
  }
  return out;
}

}  // namespace khlab

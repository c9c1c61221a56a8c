#include "khlab/hessian_solver.hpp"
#include "khlab/interp.hpp"
#include "khlab/levelset_analysis.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace khlab;

namespace {

AnalyticField norm_squared(int n) {
  return AnalyticField(
      n, [](const Point& x) { return x.squaredNorm(); }, [](const Point& x) { return Point(2.0 * x); },
      [n](const Point&) { return Matrix(2.0 * Matrix::Identity(n, n)); });
}

AnalyticField dumbbell() {
  const Point a = make_point({1.0, 0.0, 0.0});
  return AnalyticField(3, [a](const Point& x) { return std::min((x - a).squaredNorm(), (x + a).squaredNorm()); });
}

SamplerOptions boxed(Point lo, Point hi, int pairs = 4000) {
  SamplerOptions o;
  o.box_lo = std::move(lo);
  o.box_hi = std::move(hi);
  o.pairs = pairs;
  return o;
}

double signed_area(const Polyline& p) {
  double a = 0.0;
  const std::size_t m = p.points.size();
  for (std::size_t i = 0; i < m; ++i) {
    const auto& u = p.points[i];
    const auto& v = p.points[(i + 1) % m];
    a += u[0] * v[1] - v[0] * u[1];
  }
  return 0.5 * a;
}

SlicePlane xz_plane(double half, int res) {
  SlicePlane sp;
  sp.origin = Point::Zero(3);
  sp.e1 = make_point({1, 0, 0});
  sp.e2 = make_point({0, 0, 1});
  sp.u_lo = sp.v_lo = -half;
  sp.u_hi = sp.v_hi = half;
  sp.nu = sp.nv = res;
  return sp;
}

}  // namespace

TEST(Convexity, BallIsConvex) {
  const auto f = norm_squared(3);
  const auto rep = sublevel_convexity_check(f, 1.0, 1e-9, boxed(Point::Constant(3, -1.1), Point::Constant(3, 1.1)));
  EXPECT_EQ(rep.verdict, Verdict::convex_up_to_tol);
  EXPECT_GT(rep.pairs_tested, 1000u);
  EXPECT_LE(rep.worst_excess, 0.0);
}

TEST(Convexity, DumbbellIsNot) {
  const auto f = dumbbell();
  const auto rep = sublevel_convexity_check(f, 1.2, 1e-9, boxed(make_point({-2.2, -1.2, -1.2}), make_point({2.2, 1.2, 1.2})));
  ASSERT_EQ(rep.verdict, Verdict::non_convex);
  ASSERT_TRUE(rep.witness.has_value());
  const auto& w = *rep.witness;
  EXPECT_LE(w.up, 1.2);
  EXPECT_LE(w.uq, 1.2);
  EXPECT_GT(w.um, 1.2 + 3e-9);
  EXPECT_NEAR(f.value(w.m), w.um, 1e-12);
  EXPECT_NEAR((w.m - 0.5 * (w.p + w.q)).norm(), 0.0, 0.5 * (w.p - w.q).norm());
}

TEST(Convexity, SuperlevelOfInverseDistance) {
  // {1/|x| >= 1} is the unit ball; {1/|x| <= 1} is its complement
  const AnalyticField f(3, [](const Point& x) { return 1.0 / std::max(x.norm(), 1e-12); });
  auto o = boxed(Point::Constant(3, -1.2), Point::Constant(3, 1.2));
  o.superlevel = true;
  EXPECT_EQ(sublevel_convexity_check(f, 1.0, 1e-9, o).verdict, Verdict::convex_up_to_tol);
  o.superlevel = false;
  o.box_lo = Point::Constant(3, -3.0);
  o.box_hi = Point::Constant(3, 3.0);
  EXPECT_EQ(sublevel_convexity_check(f, 1.0, 1e-9, o).verdict, Verdict::non_convex);
}

TEST(Witness, TargetedTriple) {
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  const Point x0 = make_point({0, 0, 0.45});
  const double eps = 1e-3;
  // vanishes at the origin and at x0, bulges in between
  const AnalyticField f(3, [&](const Point& x) {
    const double s = x.dot(x0) / x0.squaredNorm();
    return 0.02 * s * (1.0 - s) + 0.01 * (x - s * x0).squaredNorm();
  });
  const auto rep = counterexample_witness(f, spec, x0, eps, 3.0, 1e-5);
  EXPECT_EQ(rep.verdict, Verdict::non_convex);
  EXPECT_NEAR(rep.predicted_gap, 0.5 * 0.2 * 0.225 * 0.225, 1e-15);
  EXPECT_NEAR(rep.measured_gap, 0.005 - 0.02 * (eps / 0.45) * (1 - eps / 0.45), 1e-12);
  try {
    counterexample_witness(f, spec, x0, eps, 3.0, 0.01);
    ADD_FAILURE() << "expected inconclusive";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::inconclusive);
  }
  EXPECT_THROW(counterexample_witness(f, spec, make_point({0, 0, 1e-4}), eps, 3.0, 1e-5), Error);
}

TEST(Curvature, Examples) {
  // K is oriented for fields decreasing outward: |x|^{2-n} gives the sphere
  // curvature r^{1-n}, |x|^2 gives (-1)^{n-1} r^{1-n}
  for (int n : {3, 4, 5}) {
    Point x = Point::Zero(n);
    x[0] = 2.0;
    const double sign = (n - 1) % 2 ? -1.0 : 1.0;
    EXPECT_NEAR(gaussian_curvature(norm_squared(n), x).K, sign * std::pow(2.0, 1 - n), 1e-14);
    const AnalyticField fund(n, [n](const Point& y) { return std::pow(y.norm(), 2 - n); });
    EXPECT_NEAR(gaussian_curvature(fund, x).K, std::pow(2.0, 1 - n), 1e-5);
  }
  // cylinder |x_1|^2 + |x_2|^2: flat along x_3
  const AnalyticField cyl(3, [](const Point& x) { return x[0] * x[0] + x[1] * x[1]; });
  EXPECT_NEAR(gaussian_curvature(cyl, make_point({1, 0, 0.3})).K, 0.0, 1e-6);
  EXPECT_THROW(gaussian_curvature(norm_squared(3), Point::Zero(3)), Error);
}

TEST(Curvature, EllipsoidClosedFormAndRotation) {
  const double a = 1.0, b = 1.5, c = 0.7;
  const Point axes = make_point({a, b, c});
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  Matrix r(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = g(rng);
  const Matrix Q = Eigen::HouseholderQR<Matrix>(r).householderQ();
  const Matrix D = axes.cwiseAbs2().cwiseInverse().asDiagonal();
  const Matrix A = Q * D * Q.transpose();
  const AnalyticField f(
      3, [&](const Point& x) { return x.dot(A * x); }, [&](const Point& x) { return Point(2.0 * A * x); },
      [&](const Point&) { return Matrix(2.0 * A); });
  for (int trial = 0; trial < 20; ++trial) {
    Point y(3);
    for (int i = 0; i < 3; ++i) y[i] = g(rng);
    y = y.normalized().cwiseProduct(axes);  // on the reference ellipsoid
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += y[i] * y[i] / std::pow(axes[i], 4);
    const double expected = 1.0 / (a * a * b * b * c * c * s * s);
    EXPECT_NEAR(gaussian_curvature(f, Q * y).K, expected, 1e-12 * expected);
  }
}

TEST(Curvature, CofactorMatchesAdjugate) {
  Matrix H(3, 3);
  H << 2, 1, 0, 1, 3, -1, 0, -1, 4;
  const Matrix adj = H.determinant() * H.inverse();
  EXPECT_LT((cofactor(H) - adj.transpose()).norm(), 1e-12);
}

TEST(Contours, Circle) {
  const auto f = norm_squared(3);
  const auto lines = extract_isocontour(f, 0.25, xz_plane(1.0, 201));
  ASSERT_EQ(lines.size(), 1u);
  const auto& p = lines[0];
  EXPECT_TRUE(p.closed);
  EXPECT_GT(signed_area(p), 0.0);
  EXPECT_NEAR(signed_area(p), M_PI * 0.25, 2e-3);
  EXPECT_EQ(p.turn_sign_changes, 0);
  for (const auto& q : p.points) EXPECT_NEAR(std::hypot(q[0], q[1]), 0.5, 1e-3);
  EXPECT_TRUE(extract_isocontour(f, -1.0, xz_plane(1.0, 51)).empty());
}

TEST(Contours, DumbbellNeckTurnsBack) {
  const auto f = dumbbell();
  const auto two = extract_isocontour(f, 0.5, xz_plane(2.5, 201));
  EXPECT_EQ(two.size(), 2u);
  const auto one = extract_isocontour(f, 1.2, xz_plane(2.5, 201));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_GT(one[0].turn_sign_changes, 0);
}

// ---------------------------------------------------------------- exterior harmonic control

namespace {

struct SpheroidCase {
  std::shared_ptr<const ConvexBody> body;
  HarmonicSolution coarse, fine;
};

const SpheroidCase& spheroid(double offset) {
  static std::map<double, SpheroidCase> cache;
  auto it = cache.find(offset);
  if (it != cache.end()) return it->second;
  auto body = std::make_shared<Ellipsoid>(Ellipsoid::from_semi_axes(make_point({0, 0, offset}), make_point({1, 1, 1.5})));
  auto grid = [&](double h) {
    return StructuredGrid::axisym(3, graded_axis(0, 16.5, {{0.0, h}}, 0.05, 0.25),
                                  graded_axis(-16.5, 16.5, {{offset, h}}, 0.05, 0.25));
  };
  const auto g = grid(0.04);
  SpheroidCase c{body, solve_harmonic_exterior(body, 16.0, g), solve_harmonic_exterior(body, 16.0, g.refined())};
  return cache.emplace(offset, std::move(c)).first->second;
}

}  // namespace

TEST(HarmonicSpheroid, CapacityAndCurvature) {
  const auto& c = spheroid(0.0);
  EXPECT_TRUE(c.coarse.maximum_principle);
  const GridFieldView v(c.coarse.field);
  // capacity of the prolate spheroid: sqrt(a^2 - b^2) / artanh(sqrt(a^2 - b^2) / a)
  const double e = std::sqrt(1.5 * 1.5 - 1.0);
  const double M = e / std::atanh(e / 1.5);
  const auto fit = fit_asymptotic_M(v, {4.0, 6.0, 9.0}, *c.body);
  EXPECT_NEAR(fit.M, M, 0.01 * M);
  EXPECT_TRUE(fit.sandwich_ok);
  const auto K = curvature_asymptotic_fit(v, {5.0, 7.0, 10.0});
  EXPECT_GT(K.min_K, 0.0);
  for (const auto& sh : K.shells) EXPECT_NEAR(sh.mean_scaled, 1.0, 0.02);
  EXPECT_NEAR(K.fitted_exponent, -2.0, 0.05);
}

TEST(HarmonicSpheroid, SuperlevelSetsConvex) {
  const auto& c = spheroid(0.0);
  const GridFieldView v(c.coarse.field);
  for (double t : {0.8, 0.5, 0.2}) {
    SamplerOptions o;
    o.superlevel = true;
    o.pairs = 3000;
    const auto rep = sublevel_convexity_check(v, t, 1e-4, o);
    EXPECT_EQ(rep.verdict, Verdict::convex_up_to_tol) << "level " << t;
  }
}

TEST(HarmonicSpheroid, SquareRootCurvatureSuperharmonic) {
  const auto& c = spheroid(0.0);
  const GridFieldView coarse(c.coarse.field), fine(c.fine.field);
  const auto rep = superharmonicity_check(coarse, &fine, 2.0, 12.0);
  EXPECT_GT(rep.probes, 1000u);
  EXPECT_TRUE(rep.nonpositive_K.empty());
  EXPECT_LE(rep.max_laplacian, rep.tol_lap);
  EXPECT_TRUE(rep.passes);
}

TEST(HarmonicSpheroid, OffsetBodyRemainderDecaysLikeInverseRadius) {
  // K |x|^2 - 1 ~ 2 c.x / |x|^2 for a body with centroid c; the centred body has no such term
  const auto K = curvature_asymptotic_fit(GridFieldView(spheroid(0.6).coarse.field), {6.0, 8.0, 10.0, 12.0});
  const auto K0 = curvature_asymptotic_fit(GridFieldView(spheroid(0.0).coarse.field), {6.0, 8.0, 10.0, 12.0});
  EXPECT_NEAR(K.remainder_slope, -1.0, 0.25);
  EXPECT_LT(K0.remainder_slope, -1.5);
}

TEST(Superharmonic, RadialControlIsHarmonic) {
  // u = 1/|x| gives psi_ms = 1/|x|, harmonic away from the origin
  const auto body = std::make_shared<Ball>(Point::Zero(3), 1.0);
  const auto g = StructuredGrid::axisym(3, uniform_axis(0, 8.5, 0.1), uniform_axis(-8.5, 8.5, 0.1));
  const auto coarse = solve_harmonic_exterior(body, 8.0, g);
  const auto fine = solve_harmonic_exterior(body, 8.0, g.refined());
  const GridFieldView vc(coarse.field), vf(fine.field);
  const auto rep = superharmonicity_check(vc, &vf, 1.5, 6.0);
  EXPECT_TRUE(rep.passes);
  EXPECT_LT(std::abs(rep.max_laplacian), 0.05);
}

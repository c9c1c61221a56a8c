#include "khlab/geometry.hpp"
#include "khlab/stencil.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace khlab;

TEST(Normalize, Examples) {
  Matrix A = Matrix::Identity(3, 3);
  const auto p = normalize_problem(A, make_point({1, 0, 0}), 1.0);
  EXPECT_NEAR((p.y0 - make_point({-1, 0, 0})).norm(), 0.0, 1e-14);
  EXPECT_NEAR(p.c_hat, 0.5, 1e-14);
}

TEST(Normalize, RoundTripPreservesValue) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4;
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    Matrix A = (m * m.transpose() + Matrix::Identity(n, n)).eval();
    Point b(n);
    for (int i = 0; i < n; ++i) b[i] = g(rng);
    const double c = g(rng);
    const auto p = normalize_problem(A, b, c);
    for (int s = 0; s < 5; ++s) {
      Point x(n);
      for (int i = 0; i < n; ++i) x[i] = g(rng);
      const double direct = 0.5 * x.dot(A * x) + b.dot(x) + c;
      EXPECT_NEAR(p.value_normalized(p.to_normalized(x)), direct, 1e-10 * (1 + std::abs(direct)));
      EXPECT_NEAR((p.from_normalized(p.to_normalized(x)) - x).norm(), 0.0, 1e-12);
    }
  }
  Matrix bad = Matrix::Identity(3, 3);
  bad(0, 1) = 1.0;
  EXPECT_THROW(normalize_problem(bad, make_point({0, 0, 0}), 0.0), Error);
  EXPECT_THROW(normalize_problem(-Matrix::Identity(3, 3), make_point({0, 0, 0}), 0.0), Error);
}

TEST(Bodies, EllipsoidCrossingAndDistance) {
  const auto e = Ellipsoid::from_semi_axes(Point::Zero(3), make_point({1.0, 1.0, 1.5}));
  const double t = e.crossing(Point::Zero(3), make_point({0, 0, 3}));
  EXPECT_NEAR(t, 0.5, 1e-14);
  EXPECT_NEAR(e.distance(make_point({0, 0, 2.5})), 1.0, 1e-10);
  EXPECT_NEAR(e.distance(make_point({3, 0, 0})), 2.0, 1e-10);
  const auto [r, R] = e.sandwich_radii();
  EXPECT_NEAR(r, 1.0, 1e-12);
  EXPECT_NEAR(R, 1.5, 1e-3);
}

TEST(Bodies, MinkowskiOfBallsIsBall) {
  const Ball b0(Point::Zero(3), 1.0);
  const auto b1 = Ellipsoid::from_semi_axes(Point::Zero(3), make_point({3, 3, 3}));
  for (double t : {0.0, 0.25, 0.5, 1.0}) {
    const auto m = minkowski_interpolant(b0, b1, t);
    const double radius = (1 - t) * 1.0 + t * 3.0;
    EXPECT_NEAR(m.support(make_point({0, 1, 0})), radius, 1e-14);
    EXPECT_NEAR(m.level(make_point({0, 0, radius})), 0.0, 1e-10);
    EXPECT_LT(m.level(make_point({0, 0, 0.99 * radius})), 0.0);
    EXPECT_GT(m.level(make_point({0, 0, 1.01 * radius})), 0.0);
  }
  EXPECT_THROW(minkowski_interpolant(b0, b1, 1.5), Error);
}

TEST(Grid, GradedAxisHitsKnotsAndRefinesNested) {
  const auto ax = graded_axis(-2.0, 3.0, {{0.45, 1e-3}}, 0.2, 0.25, {0.45, 0.0});
  EXPECT_DOUBLE_EQ(ax.front(), -2.0);
  EXPECT_DOUBLE_EQ(ax.back(), 3.0);
  EXPECT_NE(std::find(ax.begin(), ax.end(), 0.45), ax.end());
  EXPECT_NE(std::find(ax.begin(), ax.end(), 0.0), ax.end());
  double hmin = 1.0, hmax = 0.0;
  for (std::size_t i = 1; i < ax.size(); ++i) {
    hmin = std::min(hmin, ax[i] - ax[i - 1]);
    hmax = std::max(hmax, ax[i] - ax[i - 1]);
  }
  EXPECT_LE(hmin, 1.6e-3);
  EXPECT_LE(hmax, 0.25 + 1e-12);
  const auto fine = refine_axis(ax);
  ASSERT_EQ(fine.size(), 2 * ax.size() - 1);
  for (std::size_t i = 0; i < ax.size(); ++i) EXPECT_EQ(fine[2 * i], ax[i]);
  const auto g = StructuredGrid::full({ax, ax});
  const auto gf = g.refined();
  for (std::size_t i = 0; i < g.size(); i += 97)
    EXPECT_EQ((gf.coords(gf.from_coarse(g, i)) - g.coords(i)).norm(), 0.0);
}

TEST(Grid, AxisymAmbientRoundTrip) {
  const auto g = StructuredGrid::axisym(4, uniform_axis(0.0, 2.0, 0.5), uniform_axis(-1.0, 1.0, 0.5));
  EXPECT_EQ(g.ambient_dim(), 4);
  EXPECT_EQ(g.dims(), 2);
  const Point x = make_point({0.3, -0.4, 0.0, 0.7});
  const Point c = g.from_ambient(x);
  EXPECT_NEAR(c[0], 0.5, 1e-15);
  EXPECT_NEAR(c[1], 0.7, 1e-15);
}

TEST(Classify, NodeAtCenterIsObstacle) {
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  const Point x0 = make_point({0, 0, 0.45});
  const auto g = StructuredGrid::axisym(3, uniform_axis(0, 4, 0.05), uniform_axis(-5, 5, 0.05, {0.45}));
  const RingDomain ring(spec, x0, 0.1, 2.0, g);
  const auto c = classify_nodes(ring);
  std::vector<int> m;
  ASSERT_TRUE(g.locate(g.from_ambient(x0), m));
  std::size_t best = 0;
  double dist = 1e9;
  for (std::size_t i = 0; i < g.size(); ++i)
    if ((g.ambient(i) - x0).norm() < dist) dist = (g.ambient(i) - x0).norm(), best = i;
  EXPECT_LT(dist, 1e-12);
  EXPECT_EQ(c.labels[best], NodeClass::obstacle);
  EXPECT_GT(c.count(NodeClass::inner_adjacent), 0u);
  EXPECT_GT(c.count(NodeClass::outer_adjacent), 0u);
  // too coarse for the separation
  const auto coarse = StructuredGrid::axisym(3, uniform_axis(0, 4, 1.0), uniform_axis(-5, 5, 1.0));
  EXPECT_THROW(classify_nodes(ring.with_grid(coarse)), Error);
  EXPECT_THROW(RingDomain(spec, make_point({0.1, 0, 0.45}), 0.1, 2.0, g), Error);
  EXPECT_THROW(RingDomain(spec, make_point({0, 0, 0.6}), 0.1, 2.0, g), Error);
  RingOptions allow;
  allow.allow_x0_outside_half = true;
  EXPECT_NO_THROW(RingDomain(spec, make_point({0, 0, 0.6}), 0.1, 2.0, g, allow));
}

namespace {

// Every derivative functional is exact on quadratics, also at cut nodes.
void check_quadratic_exactness(const StructuredGrid& g, std::shared_ptr<const ConvexBody> inner,
                               std::shared_ptr<const ConvexBody> outer) {
  const int n = g.ambient_dim();
  Matrix Q = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) Q(i, i) = 0.3 + 0.1 * i;
  if (g.mode() == GridMode::full) Q(0, n - 1) = Q(n - 1, 0) = 0.2;
  Point b = Point::Zero(n);
  b[n - 1] = 0.7;
  if (g.mode() == GridMode::full) b[0] = -0.3;
  if (g.mode() == GridMode::axisym)
    for (int i = 1; i < n - 1; ++i) Q(i, i) = Q(0, 0);
  auto f = [=](const Point& x) { return 0.5 * x.dot(Q * x) + b.dot(x) + 0.25; };
  DiscretizationOptions opt;
  const Discretization d(g, dirichlet(outside_of(inner), f), dirichlet(inside_of(outer), f), opt);
  std::vector<double> u(d.unknowns());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = f(g.ambient(d.node_of(i)));
  double worst = 0.0;
  int checked = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const Point x = g.ambient(d.node_of(i));
    const Matrix H = d.hessian(i, u);
    // roundoff allowance: tiny Shortley-Weller arms carry huge weights
    double wmax = 0.0;
    for (int f = 0; f < d.features(); ++f)
      for (const auto& t : d.terms(i, f)) wmax = std::max(wmax, std::abs(t.w));
    const double allow = 1e-13 * wmax * (1.0 + std::abs(u[i]));
    if (g.mode() == GridMode::full) {
      Matrix ref = Q;
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          if (r != c && d.terms(i, d.mixed_feature(std::min(r, c), std::max(r, c))).empty()) ref(r, c) = 0.0;
      worst = std::max(worst, (H - ref).cwiseAbs().maxCoeff() - allow);
    } else {
      // in the (rho, z) frame: Q restricted to span(e1, en) and the tangential block
      Matrix E = Matrix::Zero(n, n);
      E(0, 0) = Q(0, 0);
      E(1, 1) = Q(n - 1, n - 1);
      for (int r = 2; r < n; ++r) E(r, r) = Q(0, 0);
      // mixed entry is zero for this Q; the first derivative in rho is Q00 * rho
      worst = std::max(worst, (H - E).cwiseAbs().maxCoeff() - allow);
      const double ur = d.evaluate(i, d.first_feature(0), u);
      worst = std::max(worst, std::abs(ur - Q(0, 0) * x.head(n - 1).norm()) - allow);
    }
    ++checked;
  }
  EXPECT_GT(checked, 100);
  EXPECT_LT(worst, 1e-8);
}

}  // namespace

TEST(Stencil, ExactOnQuadraticsFull) {
  const auto ax = uniform_axis(-2.0, 2.0, 0.13, {0.0});
  const auto g = StructuredGrid::full({ax, ax, ax});
  check_quadratic_exactness(g, std::make_shared<Ball>(make_point({0.1, 0.0, 0.3}), 0.37),
                            std::make_shared<Ellipsoid>(Ellipsoid::from_semi_axes(Point::Zero(3), make_point({1.7, 1.5, 1.8}))));
}

TEST(Stencil, ExactOnQuadraticsAxisym) {
  const auto g = StructuredGrid::axisym(4, graded_axis(0.0, 2.0, {{0.0, 0.01}}, 0.2, 0.1),
                                        graded_axis(-2.0, 2.0, {{0.45, 0.01}}, 0.2, 0.1, {0.45}));
  check_quadratic_exactness(g, std::make_shared<Ball>(make_point({0, 0, 0, 0.45}), 0.2),
                            std::make_shared<Ellipsoid>(Ellipsoid::from_semi_axes(Point::Zero(4), make_point({1.7, 1.7, 1.7, 1.8}))));
}

TEST(Stencil, ScatterExtendsObstacle) {
  const auto ax = uniform_axis(-2.0, 2.0, 0.25);
  const auto g = StructuredGrid::full({ax, ax, ax});
  DiscretizationOptions opt;
  opt.obstacle_value = 3.0;
  const Discretization d(g, dirichlet_constant(outside_of(std::make_shared<Ball>(Point::Zero(3), 0.6)), 3.0),
                         dirichlet_constant(inside_of(std::make_shared<Ball>(Point::Zero(3), 1.7)), 0.0), opt);
  const auto v = d.scatter(std::vector<double>(d.unknowns(), 1.0));
  std::size_t obstacle = 0, nan = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (d.classification().labels[i] == NodeClass::obstacle) {
      EXPECT_EQ(v[i], 3.0);
      ++obstacle;
    }
    if (std::isnan(v[i])) ++nan;
  }
  EXPECT_GT(obstacle, 0u);
  EXPECT_EQ(nan, d.classification().count(NodeClass::exterior));
}

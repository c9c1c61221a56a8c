#include "khlab/hessian_solver.hpp"
#include "khlab/interp.hpp"
#include "khlab/levelset_analysis.hpp"

#include <gtest/gtest.h>

#include <Eigen/SparseLU>

using namespace khlab;

namespace {

StructuredGrid cube_grid(double half, double h, int n = 3) {
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(n), uniform_axis(-half, half, h, {0.0}));
  return StructuredGrid::full(axes);
}

std::shared_ptr<Discretization> annulus_disc(const StructuredGrid& g, double r, double R, double u_in, double u_out) {
  const int n = g.ambient_dim();
  return std::make_shared<Discretization>(
      g, dirichlet_constant(outside_of(std::make_shared<Ball>(Point::Zero(n), r)), u_in),
      dirichlet_constant(inside_of(std::make_shared<Ball>(Point::Zero(n), R)), u_out));
}

}  // namespace

TEST(Newton, PoissonMatchesDirectLinearSolve) {
  const auto g = cube_grid(1.2, 0.1);
  auto d = annulus_disc(g, 0.3, 1.0, 0.0, 0.5);
  auto [f, rep] = newton_solve(d, 1, 1.0, std::vector<double>(d->unknowns(), 0.0), {});
  EXPECT_TRUE(rep.converged);
  // assemble trace(D_h^2 u) = 1 directly
  const std::size_t N = d->unknowns();
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd b(static_cast<Eigen::Index>(N));
  for (std::size_t i = 0; i < N; ++i) {
    double c = 0.0;
    for (int a = 0; a < 3; ++a) {
      const int ft = d->second_feature(a);
      c += d->constant(i, ft);
      for (const auto& t : d->terms(i, ft)) trip.emplace_back(static_cast<int>(i), static_cast<int>(t.unknown), t.w);
    }
    b[static_cast<Eigen::Index>(i)] = 1.0 - c;
  }
  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(A);
  const Eigen::VectorXd x = lu.solve(b);
  double diff = 0.0;
  for (std::size_t i = 0; i < N; ++i) diff = std::max(diff, std::abs(x[static_cast<Eigen::Index>(i)] - f.unknowns[i]));
  EXPECT_LT(diff, 1e-9);
}

TEST(Newton, QuadraticIsReproduced) {
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  const auto g = cube_grid(1.2, 0.1);
  auto q = [&](const Point& x) { return psi(x, spec, 2.0); };
  auto d = std::make_shared<Discretization>(
      g, dirichlet(outside_of(std::make_shared<Ball>(make_point({0, 0, 0.2}), 0.25)), q),
      dirichlet(inside_of(std::make_shared<Ellipsoid>(Point::Zero(3), spec.matrix(), 0.1)), q));
  std::vector<double> u0(d->unknowns());
  for (std::size_t i = 0; i < u0.size(); ++i) u0[i] = q(g.ambient(d->node_of(i)));
  auto res = detail::evaluate_residual(*d, 1, 1.0, u0, 1e-8, false);
  EXPECT_LE(detail::norm_inf_scaled(res), 1e-12);
  // the same for k = 3 with A = a* I: S_3(a* I) = 1
  const auto iso = SymSpec::isotropic(3, 3);
  auto qi = [&](const Point& x) { return psi(x, iso, 1.0); };
  auto di = std::make_shared<Discretization>(
      g, dirichlet(outside_of(std::make_shared<Ball>(make_point({0.1, 0, 0.2}), 0.25)), qi),
      dirichlet(inside_of(std::make_shared<Ball>(Point::Zero(3), 1.0)), qi));
  std::vector<double> ui(di->unknowns());
  for (std::size_t i = 0; i < ui.size(); ++i) ui[i] = qi(g.ambient(di->node_of(i)));
  auto resi = detail::evaluate_residual(*di, 3, 1.0, ui, 1e-8, false);
  EXPECT_LE(detail::norm_inf_scaled(resi), 1e-12);
  EXPECT_EQ(resi.projections, 0);
}

TEST(Concentric, K1FullGridConverges) {
  const auto spec = SymSpec::isotropic(3, 1);
  std::vector<double> err;
  for (double h : {0.2, 0.1, 0.05}) {
    const auto sol = solve_concentric(spec, 0.5, 1.5, 2.0, cube_grid(1.6, h));
    EXPECT_TRUE(sol.report.converged);
    err.push_back(sol.max_error);
  }
  EXPECT_GT(std::log2(err[0] / err[1]), 1.5);
  EXPECT_GT(std::log2(err[1] / err[2]), 1.5);
}

TEST(Concentric, K2AxisymConverges) {
  const auto spec = SymSpec::isotropic(4, 2);
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) {
    const auto g = StructuredGrid::axisym(4, uniform_axis(0.0, 1.7, h), uniform_axis(-1.7, 1.7, h));
    const auto sol = solve_concentric(spec, 0.5, 1.5, 1.0, g);
    EXPECT_TRUE(sol.report.converged);
    err.push_back(sol.max_error);
  }
  EXPECT_GT(std::log2(err[1] / err[2]), 1.0);
}

TEST(Newton, AxisymAgreesWithFullGrid) {
  // Poisson in a ball minus an off-centre ball on the axis
  const double h = 0.075;
  const auto inner = std::make_shared<Ball>(make_point({0, 0, 0.3}), 0.25);
  const auto outer = std::make_shared<Ball>(Point::Zero(3), 1.0);
  auto solve = [&](const StructuredGrid& g) {
    auto d = std::make_shared<Discretization>(g, dirichlet_constant(outside_of(inner), 0.0),
                                              dirichlet_constant(inside_of(outer), 1.0));
    return GridFieldView(newton_solve(d, 1, 1.0, std::vector<double>(d->unknowns(), 0.5), {}).first);
  };
  const auto full = solve(cube_grid(1.1, h));
  const auto axi = solve(StructuredGrid::axisym(3, uniform_axis(0, 1.1, h), uniform_axis(-1.1, 1.1, h, {0.0})));
  double diff = 0.0;
  for (const auto& x : {make_point({0, 0, -0.5}), make_point({0.5, 0, 0}), make_point({0.3, 0.4, 0.1}),
                        make_point({0, 0, 0.7})})
    diff = std::max(diff, std::abs(full.value(x) - axi.value(x)));
  EXPECT_LT(diff, 2e-3);
}

TEST(Ring, SandwichAndMonotoneSweeps) {
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  const Point x0 = make_point({0, 0, 0.45});
  const double R0 = default_R0(spec);
  const double eps_min = 0.005;
  auto rho = graded_axis(0, 32.5, {{0.0, eps_min / 2}}, 0.2, 1.0);
  auto z = graded_axis(-45.5, 45.5, {{0.45, eps_min / 2}, {0.0, 0.01}}, 0.2, 1.0, {0.0, 0.45});
  const auto g = StructuredGrid::axisym(3, rho, z);
  const double alpha = alpha0_search(spec, R0, x0, 0.02).alpha0;
  const RingDomain base(spec, x0, 0.02, 160.0, g);
  const auto sol = solve_ring(spec, base, alpha);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_LE(sol.report.sandwich_violation, 0.0);

  const auto rs = r_sweep(spec, base, {140.0, 160.0, 200.0}, alpha);
  ASSERT_EQ(rs.pairs.size(), 2u);
  EXPECT_GT(rs.pairs[0].common_nodes, 1000u);
  EXPECT_LE(rs.max_violation, 1e-6);

  const auto es = eps_sweep(spec, base, {0.02, 0.01, eps_min}, alpha);
  EXPECT_LE(es.max_violation, 1e-6);
  // the field at the origin increases toward psi(0) = mu(alpha) as eps shrinks
  const GridFieldView a(es.solutions[0].field), b(es.solutions[2].field);
  EXPECT_LT(a.value(Point::Zero(3)), b.value(Point::Zero(3)));
  EXPECT_LT(b.value(Point::Zero(3)), sol.mu_alpha);
  EXPECT_THROW(eps_sweep(spec, base, {0.01, 0.02}, alpha), Error);
}

TEST(Ring, GradientMaxAtBoundary) {
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  const Point x0 = make_point({0, 0, 0.45});
  auto rho = graded_axis(0, 29.5, {{0.0, 0.005}}, 0.2, 1.0);
  auto z = graded_axis(-41.5, 41.5, {{0.45, 0.005}}, 0.2, 1.0, {0.45});
  const RingDomain ring(spec, x0, 0.02, 160.0, StructuredGrid::axisym(3, rho, z));
  const double alpha = alpha0_search(spec, default_R0(spec), x0, 0.02).alpha0;
  const auto sol = solve_ring(spec, ring, alpha);
  const auto band = gradient_band(sol.field);
  EXPECT_TRUE(band.global_max_at_boundary);
  EXPECT_GE(band.inner_min, 2 * spec.a_star * 0.02 * 0.8);
  EXPECT_GE(band.outer_min, 0.5 * std::sqrt(spec.lambda_min() * 160.0) * 0.8);
}

TEST(Harmonic, BallControl) {
  const double r = 1.0;
  const auto body = std::make_shared<Ball>(Point::Zero(3), r);
  std::vector<double> err;
  for (double h : {0.2, 0.1}) {
    const auto g = StructuredGrid::axisym(3, uniform_axis(0, 12.5, h), uniform_axis(-12.5, 12.5, h));
    const auto sol = solve_harmonic_exterior(body, 12.0, g);
    EXPECT_TRUE(sol.maximum_principle);
    double e = 0.0;
    for (std::size_t i = 0; i < sol.field.unknowns.size(); ++i) {
      const double rr = g.ambient(sol.field.disc->node_of(i)).norm();
      e = std::max(e, std::abs(sol.field.unknowns[i] - r / rr));
    }
    err.push_back(e);
    const GridFieldView v(sol.field);
    const auto fit = fit_asymptotic_M(v, {3.0, 5.0, 8.0}, *body);
    EXPECT_NEAR(fit.M, r, 0.02 * r);
    EXPECT_TRUE(fit.sandwich_ok || std::abs(fit.M - r) < 0.02);
  }
  EXPECT_GT(std::log2(err[0] / err[1]), 1.5);
}

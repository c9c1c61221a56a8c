#pragma once

// Newton solver for S_k(D^2 u) = f on classified grids, with the convex-ring
// problem, the concentric manufactured control, parameter sweeps, and the
// exterior harmonic problem.

#include "khlab/common.hpp"
#include "khlab/geometry.hpp"
#include "khlab/profiles.hpp"
#include "khlab/stencil.hpp"
#include "khlab/symcore.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace khlab {

struct SolverOptions {
  double tol = -1.0;  // normalized residual target; <= 0 picks 1e-8 (k = 1) or 1e-6 (k >= 2)
  int max_newton = 60;
  int max_restarts = 3;
  int pseudo_time_steps = 200;  // per restart, when Newton stalls
  double min_step = 1.0 / 64.0;
  double gamma_margin = 1e-8;
  std::string linear_solver = "auto";  // auto | direct | iterative
  int max_linear_iterations = 20000;
  bool verbose = false;
};

struct SolveReport {
  bool converged = false;
  double tol = 0.0;
  double residual_inf = 0.0;      // normalized by the stencil magnitude at each node
  double residual_raw_inf = 0.0;  // |F| without normalization
  int iterations = 0;
  int linear_iterations = 0;
  int pseudo_time_steps = 0;
  int restarts = 0;
  int projections = 0;      // Gamma_k projections over all residual evaluations
  int final_projections = 0;  // at the returned iterate
  int mixed_fallbacks = 0;
  std::size_t unknowns = 0;
  std::string linear_solver;
  double sandwich_violation = 0.0;
  std::vector<std::string> monotonicity_flags;
  double runtime_seconds = 0.0;
};

/// Discrete field on a classified grid, extended by a constant inside the inner body.
struct GridField {
  std::shared_ptr<const Discretization> disc;
  std::vector<double> unknowns;  // values at active nodes
  std::vector<double> nodal;     // values at every node (NaN outside the domain)

  const StructuredGrid& grid() const { return disc->grid(); }
  double at_node(std::size_t node) const { return nodal[node]; }
};

class SolverFailed : public Error {
 public:
  SolverFailed(const std::string& what, GridField field, SolveReport report)
      : Error(ErrorKind::solver_failed, what), field_(std::move(field)), report_(std::move(report)) {}
  const GridField& field() const { return field_; }
  const SolveReport& report() const { return report_; }

 private:
  GridField field_;
  SolveReport report_;
};

namespace detail {

struct Residual {
  std::vector<double> F;
  std::vector<double> scale;  // normalization per node
  std::vector<std::vector<double>> dF;  // per unknown, derivative w.r.t. each Hessian feature
  int projections = 0;
};

/// F = S_k(M)^(1/k) - rhs^(1/k) at every unknown, with its feature derivatives.
inline Residual evaluate_residual(const Discretization& disc, int k, double rhs, const std::vector<double>& u,
                                  double margin, bool with_derivative) {
  const std::size_t N = disc.unknowns();
  const auto& feats = disc.hessian_features();
  const auto& slots = disc.hessian_slots();
  const int n = disc.n();
  std::vector<std::size_t> slot_feat;
  for (const auto& s : slots)
    slot_feat.push_back(static_cast<std::size_t>(std::find(feats.begin(), feats.end(), s.feature) - feats.begin()));
  Residual r;
  r.F.resize(N);
  r.scale.resize(N);
  if (with_derivative) r.dF.assign(N, std::vector<double>(feats.size(), 0.0));
  const double target = k == 1 ? rhs : std::pow(rhs, 1.0 / k);
  int projections = 0;
#pragma omp parallel for schedule(static) reduction(+ : projections) num_threads(worker_count())
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(N); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::array<double, 64> fv{};
    std::array<double, 64> fmag{};
    for (std::size_t e = 0; e < feats.size(); ++e) {
      double v = disc.constant(i, feats[e]);
      double mag = std::abs(v);
      for (const auto& t : disc.terms(i, feats[e])) {
        const double c = t.w * u[t.unknown];
        v += c;
        mag += std::abs(c);
      }
      fv[e] = v;
      fmag[e] = mag;
    }
    std::array<double, 64> g{};
    double F = 0.0;
    if (k == 1) {
      // trace of the Hessian
      for (const auto& s : slots)
        if (s.row == s.col) {
          const auto e = slot_feat[&s - slots.data()];
          F += s.coef * fv[e];
          g[e] += s.coef;
        }
      F -= target;
    } else {
      Matrix M = Matrix::Zero(n, n);
      for (const auto& s : slots) {
        const auto e = slot_feat[&s - slots.data()];
        M(s.row, s.col) += s.coef * fv[e];
      }
      Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
      const Point lam = eig.eigenvalues();
      const double tau = gamma_k_shift(as_span(lam), k, margin);
      if (tau > 0.0) {
        ++projections;
        M.diagonal().array() += tau;
      }
      const auto hs = sk_of_hessian(M, k);
      const double sk = std::max(hs.value, margin);
      // outside the cone F continues below its boundary value at the rate of the
      // isotropic direction, so Newton is pushed back into Gamma_k
      F = std::pow(sk, 1.0 / k) - target - tau * std::pow(binomial(n, k), 1.0 / k);
      const Matrix dM = (1.0 / k) * std::pow(sk, 1.0 / k - 1.0) * hs.derivative;
      for (const auto& s : slots) {
        const auto e = slot_feat[&s - slots.data()];
        g[e] += s.coef * dM(s.row, s.col);
      }
    }
    double scale = 1.0 + std::abs(target);
    for (std::size_t e = 0; e < feats.size(); ++e) scale += std::abs(g[e]) * fmag[e];
    r.F[i] = F;
    r.scale[i] = scale;
    if (with_derivative)
      for (std::size_t e = 0; e < feats.size(); ++e) r.dF[i][e] = g[e];
  }
  r.projections = projections;
  return r;
}

inline double norm_inf_scaled(const Residual& r) {
  double m = 0.0;
  for (std::size_t i = 0; i < r.F.size(); ++i) m = std::max(m, std::abs(r.F[i]) / r.scale[i]);
  return m;
}
inline double norm_inf_raw(const Residual& r) {
  double m = 0.0;
  for (double f : r.F) m = std::max(m, std::abs(f));
  return m;
}
inline double merit(const Residual& r, const std::vector<double>& scale) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.F.size(); ++i) {
    const double q = r.F[i] / scale[i];
    s += q * q;
  }
  return std::sqrt(s);
}

inline Eigen::SparseMatrix<double> assemble_jacobian(const Discretization& disc, const Residual& r) {
  const auto& feats = disc.hessian_features();
  const std::size_t N = disc.unknowns();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(N * 12);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t e = 0; e < feats.size(); ++e) {
      const double g = r.dF[i][e];
      if (g == 0.0) continue;
      for (const auto& t : disc.terms(i, feats[e]))
        trip.emplace_back(static_cast<int>(i), static_cast<int>(t.unknown), g * t.w);
    }
  Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  J.setFromTriplets(trip.begin(), trip.end());
  J.makeCompressed();
  return J;
}

}  // namespace detail

/// Damped Newton with backtracking on F = S_k(D_h^2 u)^(1/k) - rhs^(1/k), falling
/// back to pseudo-time relaxation u <- u + dt F when the line search stalls.
inline std::pair<GridField, SolveReport> newton_solve(std::shared_ptr<const Discretization> disc, int k, double rhs,
                                                      std::vector<double> u, const SolverOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  SolveReport rep;
  rep.tol = opts.tol > 0.0 ? opts.tol : (k == 1 ? 1e-8 : 1e-6);
  rep.unknowns = disc->unknowns();
  rep.mixed_fallbacks = disc->mixed_fallbacks();
  require(u.size() == disc->unknowns(), ErrorKind::invalid_argument, "newton_solve: initial guess size mismatch");
  require(k >= 1 && k <= disc->n(), ErrorKind::invalid_argument, "newton_solve: bad k");
  require(k >= 2 || disc->n() >= 1, ErrorKind::invalid_argument, "newton_solve: bad dimension");
  const bool direct = opts.linear_solver == "direct" ||
                      (opts.linear_solver == "auto" && (disc->grid().dims() <= 2 || disc->unknowns() < 8000));
  rep.linear_solver = direct ? "sparse-lu" : "bicgstab-diagonal";

  auto finish = [&](GridField& f) {
    rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    f.disc = disc;
    f.unknowns = u;
    f.nodal = disc->scatter(u);
  };

  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  auto res = detail::evaluate_residual(*disc, k, rhs, u, opts.gamma_margin, true);
  rep.projections += res.projections;
  const std::size_t N = u.size();
  int restarts = 0;
  int stall = 0;
  for (int it = 0; it < opts.max_newton; ++it) {
    rep.residual_inf = detail::norm_inf_scaled(res);
    rep.residual_raw_inf = detail::norm_inf_raw(res);
    rep.final_projections = res.projections;
    if (opts.verbose)
      std::fprintf(stderr, "  newton %d: residual %.3e (raw %.3e) proj %d\n", it, rep.residual_inf,
                   rep.residual_raw_inf, res.projections);
    if (rep.residual_inf <= rep.tol && res.projections == 0) {
      rep.converged = true;
      break;
    }
    rep.iterations = it + 1;
    const auto J = detail::assemble_jacobian(*disc, res);
    Eigen::VectorXd rhs_vec(static_cast<Eigen::Index>(N));
    for (std::size_t i = 0; i < N; ++i) rhs_vec[static_cast<Eigen::Index>(i)] = -res.F[i];
    Eigen::VectorXd delta;
    bool linear_ok = true;
    if (direct) {
      if (!analyzed) {
        lu.analyzePattern(J);
        analyzed = true;
      }
      lu.factorize(J);
      linear_ok = lu.info() == Eigen::Success;
      if (linear_ok) delta = lu.solve(rhs_vec);
    } else {
      Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::DiagonalPreconditioner<double>> it_solver;
      it_solver.setMaxIterations(opts.max_linear_iterations);
      // inexact Newton: forcing term tied to the current residual
      it_solver.setTolerance(std::clamp(1e-2 * rep.residual_inf, 1e-12, 1e-2));
      it_solver.compute(J);
      delta = it_solver.solve(rhs_vec);
      rep.linear_iterations += static_cast<int>(it_solver.iterations());
      linear_ok = it_solver.info() == Eigen::Success || it_solver.error() < 1e-2;
      if (!linear_ok) {
        // fall back to the direct solver for this step
        lu.analyzePattern(J);
        lu.factorize(J);
        linear_ok = lu.info() == Eigen::Success;
        if (linear_ok) delta = lu.solve(rhs_vec);
      }
    }
    if (!linear_ok || !delta.allFinite()) {
      ++stall;
    } else {
      // backtracking line search on the scaled residual
      const double m0 = detail::merit(res, res.scale);
      double step = 1.0;
      bool accepted = false;
      while (step >= opts.min_step) {
        std::vector<double> trial(u);
        for (std::size_t i = 0; i < N; ++i) trial[i] += step * delta[static_cast<Eigen::Index>(i)];
        auto r2 = detail::evaluate_residual(*disc, k, rhs, trial, opts.gamma_margin, true);
        rep.projections += r2.projections;
        if (detail::merit(r2, res.scale) <= (1.0 - 1e-4 * step) * m0 ||
            detail::norm_inf_scaled(r2) <= rep.tol) {
          u.swap(trial);
          res = std::move(r2);
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      stall = accepted ? 0 : stall + 1;
    }
    if (stall > 0) {
      // pseudo-time relaxation with a local step from the Jacobian diagonal
      ++restarts;
      rep.restarts = restarts;
      if (restarts > opts.max_restarts) break;
      for (int s = 0; s < opts.pseudo_time_steps; ++s) {
        const auto Jd = detail::assemble_jacobian(*disc, res);
        for (std::size_t i = 0; i < N; ++i) {
          const double d = std::abs(Jd.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
          if (d > 0.0) u[i] += 0.9 / d * res.F[i];
        }
        res = detail::evaluate_residual(*disc, k, rhs, u, opts.gamma_margin, true);
        rep.projections += res.projections;
        ++rep.pseudo_time_steps;
      }
      stall = 0;
    }
  }
  if (!rep.converged) {
    rep.residual_inf = detail::norm_inf_scaled(res);
    rep.residual_raw_inf = detail::norm_inf_raw(res);
    rep.final_projections = res.projections;
    rep.converged = rep.residual_inf <= rep.tol && res.projections == 0;
  }
  GridField f;
  finish(f);
  if (!rep.converged)
    throw SolverFailed("Newton did not reach residual " + std::to_string(rep.tol) + " (reached " +
                           std::to_string(rep.residual_inf) + ")",
                       f, rep);
  return {f, rep};
}

// ---------------------------------------------------------------- ring problem

struct RingSolveOptions {
  SolverOptions solver;
  double R0 = 0.0;           // <= 0: 100 lambda_max
  double glue_width = 1.0;
};

struct RingSolution {
  GridField field;
  SolveReport report;
  double alpha = 0.0;
  double R0 = 0.0;
  double mu_alpha = 0.0;      // psi constant c = mu(alpha)
  double outer_value = 0.0;   // ubar(R) on the outer boundary
  std::shared_ptr<const GluedSubsolution> glued;
};

inline std::shared_ptr<const Discretization> ring_discretization(const RingDomain& ring, double outer_value,
                                                                 bool mixed) {
  auto cls = classify_nodes(ring);
  DiscretizationOptions dopt;
  dopt.mixed = mixed;
  dopt.obstacle_value = 0.0;
  return std::make_shared<Discretization>(ring.grid(), std::move(cls), dirichlet_constant(ring.inner_piece(), 0.0),
                                          dirichlet_constant(ring.outer_piece(), outer_value), dopt);
}

/// Solves S_k(D^2 u) = 1 in E_R(0) \ B_eps(x0) with u = 0 on the sphere and
/// u = ubar(R) on the ellipsoid, starting from the glued subsolution.
inline RingSolution solve_ring(const SymSpec& spec, const RingDomain& ring, double alpha,
                               const RingSolveOptions& opts = {}) {
  RingSolution out;
  out.alpha = alpha;
  out.R0 = opts.R0 > 0.0 ? opts.R0 : default_R0(spec);
  require(ring.R() > 3.0 * out.R0, ErrorKind::invalid_argument, "solve_ring: need R > 3 R0");
  out.mu_alpha = mu(alpha, spec, out.R0);
  out.outer_value = ubar(ring.R(), alpha, spec, out.R0);
  out.glued = std::make_shared<GluedSubsolution>(spec, out.R0, alpha, ring.x0(), ring.eps(), ring.R(), opts.glue_width);
  const bool mixed = spec.k >= 2 || ring.grid().mode() == GridMode::axisym;
  auto disc = ring_discretization(ring, out.outer_value, mixed);
  std::vector<double> u0(disc->unknowns());
  for (std::size_t i = 0; i < u0.size(); ++i) u0[i] = (*out.glued)(disc->grid().ambient(disc->node_of(i)));
  auto [field, rep] = newton_solve(disc, spec.k, 1.0, std::move(u0), opts.solver);
  // sandwich: glued subsolution <= u <= psi
  double viol = 0.0;
  for (std::size_t i = 0; i < field.unknowns.size(); ++i) {
    const Point x = disc->grid().ambient(disc->node_of(i));
    const double v = field.unknowns[i];
    viol = std::max({viol, (*out.glued)(x) - v, v - psi(x, spec, out.mu_alpha)});
  }
  rep.sandwich_violation = viol;
  out.field = std::move(field);
  out.report = std::move(rep);
  return out;
}

/// solve_ring on an axisymmetric (rho, z) grid.
inline RingSolution solve_ring_axisym(const SymSpec& spec, const RingDomain& ring, double alpha,
                                      const RingSolveOptions& opts = {}) {
  require(ring.grid().mode() == GridMode::axisym, ErrorKind::invalid_argument,
          "solve_ring_axisym: ring grid is not axisymmetric");
  return solve_ring(spec, ring, alpha, opts);
}

// ---------------------------------------------------------------- concentric control

struct ConcentricSolution {
  GridField field;
  SolveReport report;
  double max_error = 0.0;  // against radial_solution at active nodes
};

/// A = a* I, x0 = 0: u = radial_solution(|x|) on B_rho_out \ B_r with its own boundary data.
inline ConcentricSolution solve_concentric(const SymSpec& spec, double r, double rho_out, double alpha,
                                           const StructuredGrid& grid, const SolverOptions& opts = {}) {
  require(is_isotropic(spec), ErrorKind::invalid_argument, "solve_concentric: requires A = a* I");
  require(rho_out > r, ErrorKind::invalid_argument, "solve_concentric: need rho_out > r");
  const int n = spec.n;
  auto inner = std::make_shared<Ball>(Point::Zero(n), r);
  auto outer = std::make_shared<Ball>(Point::Zero(n), rho_out);
  const auto table = tabulate_radial(r, alpha, spec, rho_out * 1.0001);
  const double outer_value = radial_solution(rho_out, r, alpha, spec);
  DiscretizationOptions dopt;
  dopt.mixed = spec.k >= 2 || grid.mode() == GridMode::axisym;
  auto disc = std::make_shared<Discretization>(grid, dirichlet_constant(outside_of(inner), 0.0),
                                               dirichlet_constant(inside_of(outer), outer_value), dopt);
  std::vector<double> u0(disc->unknowns());
  for (std::size_t i = 0; i < u0.size(); ++i) {
    const double rho = disc->grid().ambient(disc->node_of(i)).norm();
    // k-convex quadratic through both boundary values
    u0[i] = outer_value * (rho * rho - r * r) / (rho_out * rho_out - r * r);
  }
  auto [field, rep] = newton_solve(disc, spec.k, 1.0, std::move(u0), opts);
  ConcentricSolution out;
  for (std::size_t i = 0; i < field.unknowns.size(); ++i) {
    const double rho = disc->grid().ambient(disc->node_of(i)).norm();
    out.max_error = std::max(out.max_error, std::abs(field.unknowns[i] - table(rho)));
  }
  out.field = std::move(field);
  out.report = std::move(rep);
  return out;
}

// ---------------------------------------------------------------- Richardson

/// |u_h - u_{h/2}| * 4/3 at nodes active on both grids (fine grid refines coarse).
inline std::vector<double> richardson_nodal(const GridField& coarse, const GridField& fine) {
  const auto& gc = coarse.grid();
  const auto& gf = fine.grid();
  std::vector<double> est(gc.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < gc.size(); ++i) {
    if (coarse.disc->unknown_of(i) < 0) continue;
    const std::size_t j = gf.from_coarse(gc, i);
    if (fine.disc->unknown_of(j) < 0) continue;
    est[i] = std::abs(coarse.nodal[i] - fine.nodal[j]) * 4.0 / 3.0;
  }
  return est;
}

inline double richardson_tol(const GridField& coarse, const GridField& fine) {
  double m = 0.0;
  for (double e : richardson_nodal(coarse, fine))
    if (!std::isnan(e)) m = std::max(m, e);
  return m;
}

// ---------------------------------------------------------------- sweeps

struct SweepPair {
  double p1 = 0.0, p2 = 0.0;   // parameter values being compared
  double violation = 0.0;      // max over common nodes of the order violation (>= 0)
  std::size_t common_nodes = 0;
};

struct MonotonicityReport {
  std::vector<double> parameters;
  std::vector<SolveReport> solves;
  std::vector<SweepPair> pairs;
  double max_violation = 0.0;
  std::vector<RingSolution> solutions;
};

/// Solves on every R of the (increasing) family with a shared grid; checks
/// u^{R1} <= u^{R2} at nodes active in both.
inline MonotonicityReport r_sweep(const SymSpec& spec, const RingDomain& base, std::vector<double> Rs, double alpha,
                                  const RingSolveOptions& opts = {}) {
  require(!Rs.empty(), ErrorKind::invalid_argument, "r_sweep: empty family");
  require(std::is_sorted(Rs.begin(), Rs.end()), ErrorKind::invalid_argument, "r_sweep: R must increase");
  MonotonicityReport rep;
  rep.parameters = Rs;
  for (double R : Rs) {
    RingDomain ring(spec, base.x0(), base.eps(), R, base.grid(), base.options());
    rep.solutions.push_back(solve_ring(spec, ring, alpha, opts));
    rep.solves.push_back(rep.solutions.back().report);
  }
  for (std::size_t a = 0; a + 1 < Rs.size(); ++a) {
    SweepPair pr{Rs[a], Rs[a + 1]};
    const auto& f1 = rep.solutions[a].field;
    const auto& f2 = rep.solutions[a + 1].field;
    for (std::size_t i = 0; i < f1.nodal.size(); ++i) {
      if (f1.disc->unknown_of(i) < 0 || f2.disc->unknown_of(i) < 0) continue;
      ++pr.common_nodes;
      pr.violation = std::max(pr.violation, f1.nodal[i] - f2.nodal[i]);
    }
    rep.max_violation = std::max(rep.max_violation, pr.violation);
    rep.pairs.push_back(pr);
  }
  return rep;
}

/// Solves on every eps of the (decreasing) family with a shared grid; smaller eps
/// gives the larger extended field, checked at every node where both are defined.
inline MonotonicityReport eps_sweep(const SymSpec& spec, const RingDomain& base, std::vector<double> epss, double alpha,
                                    const RingSolveOptions& opts = {}) {
  require(!epss.empty(), ErrorKind::invalid_argument, "eps_sweep: empty family");
  require(std::is_sorted(epss.rbegin(), epss.rend()), ErrorKind::invalid_argument, "eps_sweep: eps must decrease");
  MonotonicityReport rep;
  rep.parameters = epss;
  for (double e : epss) {
    RingDomain ring(spec, base.x0(), e, base.R(), base.grid(), base.options());
    rep.solutions.push_back(solve_ring(spec, ring, alpha, opts));
    rep.solves.push_back(rep.solutions.back().report);
  }
  for (std::size_t a = 0; a + 1 < epss.size(); ++a) {
    SweepPair pr{epss[a], epss[a + 1]};
    const auto& big = rep.solutions[a].field;     // larger eps
    const auto& small = rep.solutions[a + 1].field;
    for (std::size_t i = 0; i < big.nodal.size(); ++i) {
      const double vb = big.nodal[i], vs = small.nodal[i];
      if (std::isnan(vb) || std::isnan(vs)) continue;
      ++pr.common_nodes;
      pr.violation = std::max(pr.violation, vb - vs);
    }
    rep.max_violation = std::max(rep.max_violation, pr.violation);
    rep.pairs.push_back(pr);
  }
  return rep;
}

// ---------------------------------------------------------------- boundary gradient bands

struct GradientBand {
  double inner_min = 0.0, inner_max = 0.0;  // |D_h u| at inner-adjacent nodes
  double outer_min = 0.0, outer_max = 0.0;  // |D_h u| at outer-adjacent nodes
  double global_max = 0.0;
  bool global_max_at_boundary = false;
};

/// Nodal gradient magnitudes from the first-derivative functionals.
inline GradientBand gradient_band(const GridField& f) {
  const auto& d = *f.disc;
  const auto& cls = d.classification();
  GradientBand b;
  b.inner_min = b.outer_min = std::numeric_limits<double>::infinity();
  double interior_max = 0.0, boundary_max = 0.0;
  for (std::size_t i = 0; i < d.unknowns(); ++i) {
    double g2 = 0.0;
    for (int a = 0; a < d.grid().dims(); ++a) {
      const double g = d.evaluate(i, d.first_feature(a), f.unknowns);
      g2 += g * g;
    }
    const double g = std::sqrt(g2);
    const auto lab = cls.labels[d.node_of(i)];
    if (lab == NodeClass::inner_adjacent) {
      b.inner_min = std::min(b.inner_min, g);
      b.inner_max = std::max(b.inner_max, g);
      boundary_max = std::max(boundary_max, g);
    } else if (lab == NodeClass::outer_adjacent) {
      b.outer_min = std::min(b.outer_min, g);
      b.outer_max = std::max(b.outer_max, g);
      boundary_max = std::max(boundary_max, g);
    } else {
      interior_max = std::max(interior_max, g);
    }
  }
  b.global_max = std::max(interior_max, boundary_max);
  b.global_max_at_boundary = boundary_max >= interior_max;
  return b;
}

// ---------------------------------------------------------------- exterior harmonic problem

struct HarmonicSolution {
  GridField field;
  SolveReport report;
  double min_value = 0.0, max_value = 0.0;  // over active nodes
  bool maximum_principle = false;           // 0 < u < 1 at every active node
  std::shared_ptr<const ConvexBody> body;
  double R_out = 0.0;
};

/// Delta u = 0 outside the body, u = 1 on it, monopole-exact closure on |x| = R_out.
inline HarmonicSolution solve_harmonic_exterior(std::shared_ptr<const ConvexBody> body, double R_out,
                                                const StructuredGrid& grid, const SolverOptions& opts = {}) {
  const int n = grid.ambient_dim();
  require(body->dim() == n, ErrorKind::invalid_argument, "solve_harmonic_exterior: dimension mismatch");
  require(body->contains(Point::Zero(n)), ErrorKind::invalid_argument,
          "solve_harmonic_exterior: body must contain the origin");
  const auto [r_in, r_bound] = body->sandwich_radii();
  require(R_out > 2.0 * r_bound, ErrorKind::invalid_argument, "solve_harmonic_exterior: R_out too small");
  if (grid.mode() == GridMode::axisym) {
    // sampled rotational symmetry about the last axis
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    for (int s = 0; s < 64; ++s) {
      Point x(n);
      for (int i = 0; i < n; ++i) x[i] = g(rng) * r_bound;
      Point y = Point::Zero(n);
      y[0] = x.head(n - 1).norm();
      y[n - 1] = x[n - 1];
      require(std::abs(body->level(x) - body->level(y)) <= 1e-9 * (1.0 + std::abs(body->level(x))),
              ErrorKind::invalid_argument, "solve_harmonic_exterior: body is not axisymmetric");
    }
  }
  auto outer = std::make_shared<Ball>(Point::Zero(n), R_out);
  DiscretizationOptions dopt;
  dopt.mixed = grid.mode() == GridMode::axisym || grid.dims() == 2;
  dopt.obstacle_value = 1.0;
  auto disc = std::make_shared<Discretization>(grid, dirichlet_constant(outside_of(body), 1.0),
                                               monopole_closure(inside_of(outer), n), dopt);
  std::vector<double> u0(disc->unknowns());
  for (std::size_t i = 0; i < u0.size(); ++i) {
    const double r = disc->grid().ambient(disc->node_of(i)).norm();
    u0[i] = std::pow(std::min(1.0, r_in / r), n - 2);
  }
  auto [field, rep] = newton_solve(disc, 1, 0.0, std::move(u0), opts);
  HarmonicSolution out;
  out.min_value = *std::min_element(field.unknowns.begin(), field.unknowns.end());
  out.max_value = *std::max_element(field.unknowns.begin(), field.unknowns.end());
  out.maximum_principle = out.min_value > 0.0 && out.max_value < 1.0;
  out.field = std::move(field);
  out.report = std::move(rep);
  out.body = std::move(body);
  out.R_out = R_out;
  return out;
}

}  // namespace khlab

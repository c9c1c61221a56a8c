#pragma once

// Experiment orchestration: config -> problem setup -> solve -> analysis ->
// report.json / field.csv / contours.csv / sweep.csv (+ timing.json).

#include "khlab/config.hpp"
#include "khlab/hessian_solver.hpp"
#include "khlab/interp.hpp"
#include "khlab/levelset_analysis.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace khlab::lab {

using json = nlohmann::ordered_json;

enum class Mode { run, sweep };

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string relation;  // how value is compared with tolerance
  double tolerance = 0.0;
};

struct RunResult {
  json report;
  json timing;
  std::vector<Check> checks;
  std::string field_csv, contours_csv, sweep_csv;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// JSON has no NaN or infinity
inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json jpoint(const Point& p) {
  json a = json::array();
  for (Eigen::Index i = 0; i < p.size(); ++i) a.push_back(jnum(p[i]));
  return a;
}

inline Point to_point(const std::vector<double>& v) {
  Point p(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p[static_cast<Eigen::Index>(i)] = v[i];
  return p;
}

inline json to_json(const SolveReport& r) {
  json j;
  j["converged"] = r.converged;
  j["tol"] = r.tol;
  j["residual_inf"] = jnum(r.residual_inf);
  j["residual_raw_inf"] = jnum(r.residual_raw_inf);
  j["iterations"] = r.iterations;
  j["linear_iterations"] = r.linear_iterations;
  j["pseudo_time_steps"] = r.pseudo_time_steps;
  j["restarts"] = r.restarts;
  j["projections"] = r.projections;
  j["final_projections"] = r.final_projections;
  j["mixed_fallbacks"] = r.mixed_fallbacks;
  j["unknowns"] = r.unknowns;
  j["linear_solver"] = r.linear_solver;
  j["sandwich_violation"] = jnum(r.sandwich_violation);
  return j;
}

inline json to_json(const ConvexityReport& r) {
  json j;
  j["level"] = jnum(r.level);
  j["superlevel"] = r.superlevel;
  j["verdict"] = to_string(r.verdict);
  j["tol"] = r.tol;
  j["worst_excess"] = jnum(r.worst_excess);
  j["pairs_tested"] = r.pairs_tested;
  j["points_outside"] = r.points_outside;
  if (r.witness) {
    const auto& w = *r.witness;
    j["witness"] = {{"p", jpoint(w.p)}, {"q", jpoint(w.q)},   {"m", jpoint(w.m)},         {"u_p", jnum(w.up)},
                    {"u_q", jnum(w.uq)}, {"u_m", jnum(w.um)}, {"margin", jnum(w.margin)}};
  }
  return j;
}

inline json to_json(const CurvatureReport& r) {
  json shells = json::array();
  for (const auto& s : r.shells)
    shells.push_back({{"radius", s.radius},
                      {"mean_K_scaled", jnum(s.mean_scaled)},
                      {"max_deviation", jnum(s.max_deviation)},
                      {"min_K", jnum(s.min_K)}});
  return {{"shells", shells},
          {"fitted_exponent", jnum(r.fitted_exponent)},
          {"fitted_constant", jnum(r.fitted_constant)},
          {"remainder_slope", jnum(r.remainder_slope)},
          {"outer_scaled", jnum(r.outer_scaled)},
          {"min_K", jnum(r.min_K)},
          {"samples", r.samples.size()}};
}

inline json config_json(const Config& cfg) {
  json j = json::object();
  for (const auto& k : config_schema()) j[k.section][k.key] = cfg.raw(k.section, k.key);
  return j;
}

class Stopwatch {
 public:
  explicit Stopwatch(json& sink) : sink_(sink), t0_(clock::now()), last_(t0_) {}
  void lap(const std::string& stage) {
    const auto now = clock::now();
    sink_["stages"].push_back({{"stage", stage}, {"seconds", std::chrono::duration<double>(now - last_).count()}});
    last_ = now;
  }
  void finish() { sink_["total_seconds"] = std::chrono::duration<double>(clock::now() - t0_).count(); }

 private:
  using clock = std::chrono::steady_clock;
  json& sink_;
  clock::time_point t0_, last_;
};

struct Context {
  const Config& cfg;
  Mode mode;
  RunResult& out;
  Stopwatch watch;
  std::string contours;  // csv body
  int next_polyline = 0;
  std::string sweep_rows;

  Context(const Config& c, Mode m, RunResult& r) : cfg(c), mode(m), out(r), watch(r.timing) {}

  void check(std::string name, bool pass, double value, std::string rel, double tol) {
    out.checks.push_back({std::move(name), pass, value, std::move(rel), tol});
  }
  void check_le(std::string name, double value, double tol) {
    check(std::move(name), value <= tol, value, "<=", tol);
  }
  void check_ge(std::string name, double value, double tol) {
    check(std::move(name), value >= tol, value, ">=", tol);
  }
  void sweep_row(const std::string& family, double p, const std::string& metric, double v) {
    sweep_rows += family + "," + num(p) + "," + metric + "," + num(v) + "\n";
  }
  json contour(const FieldView& f, double t, const SlicePlane& sp) {
    json arr = json::array();
    for (auto& pl : extract_isocontour(f, t, sp)) {
      const int id = next_polyline++;
      for (const auto& q : pl.points) contours += num(q[0]) + "," + num(q[1]) + "," + std::to_string(id) + "\n";
      arr.push_back({{"id", id},
                     {"level", jnum(t)},
                     {"closed", pl.closed},
                     {"points", pl.points.size()},
                     {"turn_sign_changes", pl.turn_sign_changes}});
    }
    return arr;
  }
};

inline SymSpec spec_from(const Config& cfg) {
  const int n = static_cast<int>(cfg.integer("spec", "n"));
  const int k = static_cast<int>(cfg.integer("spec", "k"));
  const auto a = cfg.list("spec", "a");
  require(static_cast<int>(a.size()) == n, ErrorKind::config_error, "spec.a must have n entries");
  return cfg.boolean("spec", "normalize") ? SymSpec::normalized(n, k, a) : SymSpec::make(n, k, a);
}

inline SolverOptions solver_from(const Config& cfg) {
  SolverOptions o;
  if (const auto t = cfg.real_or_auto("solver", "tol")) o.tol = *t;
  o.max_newton = static_cast<int>(cfg.integer("solver", "max_newton"));
  o.max_restarts = static_cast<int>(cfg.integer("solver", "max_restarts"));
  o.linear_solver = cfg.text("solver", "linear");
  o.verbose = cfg.boolean("solver", "verbose");
  return o;
}

inline SamplerOptions sampler_from(const Config& cfg) {
  SamplerOptions o;
  o.pairs = static_cast<int>(cfg.integer("analysis", "pairs"));
  o.points = static_cast<int>(cfg.integer("analysis", "points"));
  o.seed = static_cast<std::uint64_t>(cfg.integer("analysis", "seed"));
  return o;
}

inline SlicePlane slice_from(const Config& cfg, const Point& origin, double half) {
  const int n = static_cast<int>(origin.size());
  SlicePlane sp;
  sp.origin = origin;
  sp.e1 = Point::Zero(n);
  sp.e1[0] = 1.0;
  sp.e2 = Point::Zero(n);
  sp.e2[n - 1] = 1.0;
  sp.u_lo = sp.v_lo = -half;
  sp.u_hi = sp.v_hi = half;
  sp.nu = sp.nv = static_cast<int>(cfg.integer("analysis", "slice_res"));
  return sp;
}

/// Symmetric about the last axis: equal leading entries and a centre on that axis.
inline bool axisym_compatible(const std::vector<double>& diag, const Point& centre) {
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (diag[i] != diag[0] || centre[static_cast<Eigen::Index>(i)] != 0.0) return false;
  return true;
}

inline GridMode pick_mode(const Config& cfg, bool compatible, bool prefer_axisym) {
  const auto& m = cfg.text("grid", "mode");
  if (m == "axisym") {
    require(compatible, ErrorKind::config_error, "grid.mode = axisym needs a problem symmetric about the last axis");
    return GridMode::axisym;
  }
  if (m == "full") return GridMode::full;
  return compatible && prefer_axisym ? GridMode::axisym : GridMode::full;
}

inline double min_spacing(const StructuredGrid& g) {
  double h = std::numeric_limits<double>::infinity();
  for (int d = 0; d < g.dims(); ++d) h = std::min(h, g.min_spacing(d));
  return h;
}

inline std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

/// One axis: focused spacing near `foci`, growing to hmax; uniform when growth = 0.
inline std::vector<double> make_axis(const Config& cfg, double lo, double hi, std::vector<AxisFocus> foci,
                                     std::vector<double> knots) {
  const double growth = cfg.real("grid", "growth");
  const double hmax = cfg.real("grid", "hmax");
  std::erase_if(knots, [&](double k) { return k <= lo || k >= hi; });
  knots = sorted_unique(std::move(knots));
  if (growth <= 0.0) {
    double h = hmax;
    for (const auto& f : foci) h = std::min(h, f.h);
    return uniform_axis(lo, hi, h, knots);
  }
  return graded_axis(lo, hi, foci, growth, hmax, knots);
}

/// Grid for E_R(0; A) \ B_eps(x0): focused at the obstacle and the origin, with
/// nodes on 0, x0/2 and x0 so the witness triple sits on grid lines.
inline StructuredGrid ring_grid(const Config& cfg, const SymSpec& spec, const Point& x0, double eps_focus, double R,
                                GridMode mode) {
  const int n = spec.n;
  const double hf = cfg.real("grid", "focus") * eps_focus;
  const double margin = cfg.real("grid", "margin");
  auto semi = [&](int i) { return std::sqrt(2.0 * R / spec.a[static_cast<std::size_t>(i)]) + margin; };
  auto along = [&](int i) {
    const double c = x0[i];
    std::vector<AxisFocus> foci{{c, hf}};
    if (c != 0.0) foci.push_back({0.0, std::max(hf, 0.002)});
    return make_axis(cfg, -semi(i), semi(i), foci, {0.0, 0.5 * c, c});
  };
  if (mode == GridMode::axisym) return StructuredGrid::axisym(n, make_axis(cfg, 0.0, semi(0), {{0.0, hf}}, {}), along(n - 1));
  std::vector<std::vector<double>> axes;
  for (int i = 0; i < n; ++i) axes.push_back(along(i));
  return StructuredGrid::full(axes);
}

/// Richardson tol_h of the witness gap u(m) - max(u(p), u(q)) for the triple {p, q, m}.
inline double gap_tol(const FieldView& coarse, const FieldView& fine, const std::vector<Point>& triple) {
  auto gap = [&](const FieldView& f) {
    return f.value(triple[2]) - std::max(f.value(triple[0]), f.value(triple[1]));
  };
  const double d = std::abs(gap(coarse) - gap(fine)) * 4.0 / 3.0;
  return std::isnan(d) ? 0.0 : d;
}

inline double max_active(const GridField& f) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : f.unknowns) m = std::max(m, v);
  return m;
}

inline std::string field_csv(const GridField& f) {
  const auto& g = f.grid();
  std::string out = "node";
  if (g.mode() == GridMode::axisym) {
    out += ",rho,z";
  } else {
    for (int d = 0; d < g.dims(); ++d) out += ",x" + std::to_string(d + 1);
  }
  out += ",class,u\n";
  const auto& labels = f.disc->classification().labels;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out += std::to_string(i);
    const Point c = g.coords(i);
    for (Eigen::Index d = 0; d < c.size(); ++d) out += "," + num(c[d]);
    out += std::string(",") + to_string(labels[i]) + "," + num(f.nodal[i]) + "\n";
  }
  return out;
}

struct WitnessOutcome {
  std::string verdict;  // non-convex | inconclusive
  ConvexityReport report;
  std::string message;
};

inline WitnessOutcome run_witness(const FieldView& f, const SymSpec& spec, const Point& x0, double eps, double c,
                                  double tol_h) {
  WitnessOutcome w;
  try {
    w.report = counterexample_witness(f, spec, x0, eps, c, tol_h);
    w.verdict = to_string(w.report.verdict);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::inconclusive) throw;
    w.verdict = "inconclusive";
    w.message = e.what();
    w.report.tol = tol_h;
  }
  return w;
}

inline json to_json(const WitnessOutcome& w, const SymSpec& spec, const Point& x0, double c) {
  json j = to_json(w.report);
  j["verdict"] = w.verdict;
  j["predicted_gap"] = psi(0.5 * x0, spec, c) - psi(Point::Zero(spec.n), spec, c);
  j["measured_gap"] = jnum(w.report.measured_gap);
  if (!w.message.empty()) j["message"] = w.message;
  return j;
}

// ---------------------------------------------------------------- k-Hessian ring

struct RingSetup {
  SymSpec spec;
  Point x0;
  double eps = 0.0, R = 0.0, R0 = 0.0, alpha = 0.0, c_star = 0.0;
  bool alpha_auto = true;
  RingOptions ropt;
  GridMode mode = GridMode::axisym;
};

inline RingSetup ring_setup(const Config& cfg) {
  RingSetup s{spec_from(cfg)};
  const auto x0 = cfg.list("ring", "x0");
  require(static_cast<int>(x0.size()) == s.spec.n, ErrorKind::config_error, "ring.x0 must have n entries");
  s.x0 = to_point(x0);
  s.eps = cfg.real("ring", "eps");
  s.R = cfg.real("ring", "R");
  s.R0 = cfg.real_or_auto("ring", "R0").value_or(default_R0(s.spec));
  require(s.eps > 0.0 && s.R > 0.0 && s.R0 > 0.0, ErrorKind::config_error, "ring: eps, R, R0 must be positive");
  s.ropt.R0 = s.R0;
  s.ropt.enforce_standing = cfg.boolean("ring", "standing");
  s.mode = pick_mode(cfg, axisym_compatible(s.spec.a, s.x0), true);
  const auto eps_list = cfg.list("ring", "eps_list");
  require(std::is_sorted(eps_list.rbegin(), eps_list.rend()), ErrorKind::config_error, "ring.eps_list must decrease");
  const auto R_list = cfg.list("ring", "R_list");
  require(std::is_sorted(R_list.begin(), R_list.end()), ErrorKind::config_error, "ring.R_list must increase");
  for (double e : eps_list) require(e > 0.0, ErrorKind::config_error, "ring.eps_list entries must be positive");
  // domain preconditions, checked on a trivial grid before any work
  const auto probe = StructuredGrid::full(std::vector<std::vector<double>>(static_cast<std::size_t>(s.spec.n), {-1.0, 1.0}));
  for (double e : eps_list.empty() ? std::vector<double>{s.eps} : eps_list)
    for (double R : R_list.empty() ? std::vector<double>{s.R} : R_list) RingDomain(s.spec, s.x0, e, R, probe, s.ropt);
  const auto alpha = cfg.real_or_auto("ring", "alpha");
  s.alpha_auto = !alpha;
  if (alpha) {
    require(*alpha >= 0.0, ErrorKind::config_error, "ring.alpha must be >= 0");
    s.alpha = *alpha;
  }
  return s;
}

inline void resolve_alpha(RingSetup& s, json& derived) {
  if (s.alpha_auto) {
    const auto a0 = alpha0_search(s.spec, s.R0, s.x0, s.eps);
    s.alpha = a0.alpha0;
    derived["alpha0"] = a0.alpha0;
  }
  s.c_star = mu(s.alpha, s.spec, s.R0);
  derived["alpha"] = s.alpha;
  derived["c_star"] = s.c_star;
}

inline json spec_json(const SymSpec& spec) {
  return {{"n", spec.n},
          {"k", spec.k},
          {"a", spec.a},
          {"a_star", spec.a_star},
          {"h_k", spec.h_k_a},
          {"decay_exponent", spec.decay_exponent()}};
}

inline void khessian_ring(Context& ctx) {
  const auto& cfg = ctx.cfg;
  auto s = ring_setup(cfg);
  json& rep = ctx.out.report;
  json derived = spec_json(s.spec);
  derived["R0"] = s.R0;
  resolve_alpha(s, derived);
  if (s.eps < 0.5 && s.x0.norm() + s.eps < 2.0) {
    const double C = barrier_constant(s.spec, s.x0, s.eps, s.c_star);
    derived["barrier_constant"] = C;
    derived["C_eps"] = c_eps(s.eps, s.spec, C);
  }
  ctx.watch.lap("setup");

  RingSolveOptions ro;
  ro.solver = solver_from(cfg);
  ro.R0 = s.R0;
  const auto grid = ring_grid(cfg, s.spec, s.x0, s.eps, s.R, s.mode);
  const RingDomain ring(s.spec, s.x0, s.eps, s.R, grid, s.ropt);
  derived["grid"] = {{"mode", to_string(grid.mode())}, {"nodes", grid.size()}, {"min_spacing", min_spacing(grid)}};
  rep["derived"] = derived;
  const auto sol = solve_ring(s.spec, ring, s.alpha, ro);
  json solves = json::array();
  solves.push_back({{"label", "main"}, {"report", to_json(sol.report)}});
  ctx.watch.lap("solve");
  ctx.check("main solve converged", sol.report.converged, sol.report.residual_inf, "<=", sol.report.tol);

  const GridFieldView view(sol.field);
  const Point origin = Point::Zero(s.spec.n);
  const Point q = s.x0.norm() > s.eps ? Point(s.x0 * (1.0 - s.eps / s.x0.norm())) : origin;
  const std::vector<Point> triple{origin, q, 0.5 * s.x0};
  double tol_global = 0.0, tol_witness = 0.0;
  std::string tol_source = "none";
  std::vector<double> nodal_tol;
  if (cfg.boolean("grid", "refine")) {
    const auto fine = solve_ring(s.spec, ring.with_grid(grid.refined()), s.alpha, ro);
    solves.push_back({{"label", "refined"}, {"report", to_json(fine.report)}});
    nodal_tol = richardson_nodal(sol.field, fine.field);
    tol_global = richardson_tol(sol.field, fine.field);
    tol_witness = gap_tol(view, GridFieldView(fine.field), triple);
    tol_source = "richardson h/2";
    ctx.watch.lap("refined solve");
  }
  // tol_h over the part of the domain a level-t test can reach: nodes with u <= 2t
  auto level_tol = [&](double t) {
    double m = 0.0;
    for (std::size_t i = 0; i < nodal_tol.size(); ++i)
      if (!std::isnan(nodal_tol[i]) && sol.field.nodal[i] <= 2.0 * t) m = std::max(m, nodal_tol[i]);
    return m;
  };
  rep["solves"] = solves;
  const auto band = gradient_band(sol.field);
  json analysis;
  analysis["tol_h"] = {{"global", tol_global}, {"witness", tol_witness}, {"source", tol_source}};
  analysis["gradient_band"] = {{"inner_min", band.inner_min},   {"inner_max", band.inner_max},
                               {"outer_min", band.outer_min},   {"outer_max", band.outer_max},
                               {"global_max", band.global_max}, {"global_max_at_boundary", band.global_max_at_boundary}};
  ctx.check_le("sandwich violation <= tol_h", sol.report.sandwich_violation, tol_global);

  const auto expect = cfg.text("analysis", "expect");
  std::optional<WitnessOutcome> witness;
  if (cfg.boolean("analysis", "witness")) {
    witness = run_witness(view, s.spec, s.x0, s.eps, s.c_star, tol_witness);
    analysis["witness"] = to_json(*witness, s.spec, s.x0, s.c_star);
    if (expect == "non-convex") {
      ctx.check("witness verdict non-convex", witness->verdict == "non-convex", witness->report.measured_gap, ">",
                3.0 * tol_witness);
      const double pred = psi(0.5 * s.x0, s.spec, s.c_star) - psi(origin, s.spec, s.c_star);
      ctx.check_le("witness gap within relative tolerance of prediction",
                   std::abs(witness->report.measured_gap - pred) / pred, cfg.real("analysis", "gap_rel_tol"));
    } else if (expect == "convex") {
      ctx.check("witness not non-convex", witness->verdict != "non-convex", witness->report.measured_gap, "<=",
                3.0 * tol_witness);
    }
  }
  ctx.watch.lap("witness");

  // sampled sublevel tests
  json levels = json::array();
  const double umax = max_active(sol.field);
  std::vector<double> contour_levels;
  if (witness && witness->verdict == "non-convex") contour_levels.push_back(witness->report.level);
  for (double f : cfg.list("analysis", "level_fractions")) {
    const double t = f * umax;
    const double tol_t = level_tol(t);
    if (t <= tol_t) {  // indistinguishable from the obstacle at this resolution
      levels.push_back({{"fraction", f}, {"level", t}, {"tol_h", tol_t}, {"skipped", "degenerate level"}});
      continue;
    }
    auto so = sampler_from(cfg);
    so.straddle_center = s.x0;
    so.straddle_radius = std::max(4.0 * s.eps, 0.05);
    if (witness && witness->verdict == "non-convex") so.targeted.emplace_back(triple[0], triple[1]);
    const auto r = sublevel_convexity_check(view, t, tol_t, so);
    json j = to_json(r);
    j["fraction"] = f;
    levels.push_back(j);
    contour_levels.push_back(t);
    if (expect == "convex")
      ctx.check("sublevel set convex at fraction " + num(f), r.verdict == Verdict::convex_up_to_tol, r.worst_excess,
                "<=", 3.0 * tol_t);
  }
  analysis["sublevel_tests"] = levels;
  ctx.watch.lap("sublevel tests");

  json contours = json::array();
  const auto sp = slice_from(cfg, 0.5 * s.x0, cfg.real("analysis", "slice_half"));
  for (double t : contour_levels)
    for (auto& c : ctx.contour(view, t, sp)) contours.push_back(c);
  analysis["contours"] = contours;
  ctx.out.field_csv = field_csv(sol.field);
  ctx.watch.lap("contours");

  if (ctx.mode == Mode::sweep) {
    const auto eps_list = cfg.list("ring", "eps_list");
    require(!eps_list.empty(), ErrorKind::config_error, "sweep: khessian-ring needs ring.eps_list");
    json rows = json::array();
    std::vector<double> gaps;
    bool all_nonconvex = true;
    for (double e : eps_list) {
      const auto g = ring_grid(cfg, s.spec, s.x0, e, s.R, s.mode);
      const auto se = solve_ring(s.spec, RingDomain(s.spec, s.x0, e, s.R, g, s.ropt), s.alpha, ro);
      const auto w = run_witness(GridFieldView(se.field), s.spec, s.x0, e, s.c_star, tol_witness);
      all_nonconvex = all_nonconvex && w.verdict == "non-convex";
      gaps.push_back(w.report.measured_gap);
      json j = to_json(w, s.spec, s.x0, s.c_star);
      j["eps"] = e;
      j["solve"] = to_json(se.report);
      rows.push_back(j);
      ctx.sweep_row("eps", e, "witness_gap", w.report.measured_gap);
      ctx.sweep_row("eps", e, "u_origin", GridFieldView(se.field).value(origin));
      ctx.sweep_row("eps", e, "converged", se.report.converged ? 1.0 : 0.0);
      ctx.watch.lap("eps sweep " + num(e));
    }
    rep["sweep"] = {{"family", "eps"}, {"tol_h", tol_witness}, {"rows", rows}};
    double min_step = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < gaps.size(); ++i) min_step = std::min(min_step, gaps[i + 1] - gaps[i]);
    if (expect == "non-convex") {
      ctx.check("eps sweep: every witness non-convex", all_nonconvex, 0.0, "==", 0.0);
      if (gaps.size() >= 2)
        ctx.check("eps sweep: witness gap strictly increasing as eps decreases", min_step > 0.0, min_step, ">", 0.0);
    }
  }
  rep["analysis"] = analysis;
}

// ---------------------------------------------------------------- ring sweeps on a shared grid

inline void khessian_exterior_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg;
  auto s = ring_setup(cfg);
  json& rep = ctx.out.report;
  json derived = spec_json(s.spec);
  derived["R0"] = s.R0;
  resolve_alpha(s, derived);
  auto Rs = cfg.list("ring", "R_list");
  auto epss = cfg.list("ring", "eps_list");
  require(!Rs.empty() && !epss.empty(), ErrorKind::config_error,
          "khessian-exterior-sweep needs ring.R_list and ring.eps_list");
  const double R_max = std::max(s.R, Rs.back());
  const double eps_min = std::min(s.eps, epss.back());
  RingSolveOptions ro;
  ro.solver = solver_from(cfg);
  ro.R0 = s.R0;
  const auto grid = ring_grid(cfg, s.spec, s.x0, eps_min, R_max, s.mode);
  derived["grid"] = {{"mode", to_string(grid.mode())}, {"nodes", grid.size()}, {"min_spacing", min_spacing(grid)}};
  rep["derived"] = derived;
  ctx.watch.lap("setup");

  const RingDomain base(s.spec, s.x0, s.eps, s.R, grid, s.ropt);
  const auto sol = solve_ring(s.spec, base, s.alpha, ro);
  json solves = json::array();
  solves.push_back({{"label", "base"}, {"report", to_json(sol.report)}});
  ctx.check("base solve converged", sol.report.converged, sol.report.residual_inf, "<=", sol.report.tol);
  double tol_h = 0.0;
  if (cfg.boolean("grid", "refine")) {
    const auto fine = solve_ring(s.spec, base.with_grid(grid.refined()), s.alpha, ro);
    solves.push_back({{"label", "refined"}, {"report", to_json(fine.report)}});
    tol_h = richardson_tol(sol.field, fine.field);
  }
  ctx.watch.lap("base solves");
  ctx.check_le("sandwich violation <= tol_h", sol.report.sandwich_violation, tol_h);

  auto family = [&](const std::string& name, const MonotonicityReport& m) {
    json j = {{"family", name}, {"parameters", m.parameters}, {"max_violation", m.max_violation}};
    json pairs = json::array();
    for (const auto& p : m.pairs)
      pairs.push_back({{"from", p.p1}, {"to", p.p2}, {"violation", p.violation}, {"common_nodes", p.common_nodes}});
    j["pairs"] = pairs;
    bool conv = true;
    for (std::size_t i = 0; i < m.solutions.size(); ++i) {
      const auto& r = m.solves[i];
      conv = conv && r.converged;
      solves.push_back({{"label", name + "=" + num(m.parameters[i])}, {"report", to_json(r)}});
      ctx.sweep_row(name, m.parameters[i], "u_origin", GridFieldView(m.solutions[i].field).value(Point::Zero(s.spec.n)));
      ctx.sweep_row(name, m.parameters[i], "sandwich_violation", r.sandwich_violation);
    }
    for (const auto& p : m.pairs) ctx.sweep_row(name, p.p2, "order_violation_vs_previous", p.violation);
    ctx.check(name + " sweep solves converged", conv, 0.0, "==", 0.0);
    ctx.check_le(name + " sweep order violation <= tol_h", m.max_violation, tol_h);
    return j;
  };
  json sweeps = json::array();
  sweeps.push_back(family("R", r_sweep(s.spec, base, Rs, s.alpha, ro)));
  ctx.watch.lap("R sweep");
  sweeps.push_back(family("eps", eps_sweep(s.spec, base, epss, s.alpha, ro)));
  ctx.watch.lap("eps sweep");
  rep["solves"] = solves;
  rep["sweep"] = sweeps;
  rep["analysis"] = {{"tol_h", tol_h}, {"tol_h_source", cfg.boolean("grid", "refine") ? "richardson h/2" : "none"}};
  ctx.out.field_csv = field_csv(sol.field);
}

// ---------------------------------------------------------------- harmonic exterior problem

inline std::shared_ptr<const ConvexBody> harmonic_body(const Point& semi, const Point& centre) {
  const bool ball = (semi.array() == semi[0]).all() && centre.isZero(0.0);
  if (ball) return std::make_shared<Ball>(centre, semi[0]);
  return std::make_shared<Ellipsoid>(Ellipsoid::from_semi_axes(centre, semi));
}

inline StructuredGrid harmonic_grid(const Config& cfg, const Point& centre, double R_out, GridMode mode) {
  const int n = static_cast<int>(centre.size());
  const double h = cfg.real("grid", "h");
  const double L = R_out + cfg.real("grid", "margin");
  auto along = [&](int i) { return make_axis(cfg, -L, L, {{centre[i], h}}, {0.0, centre[i]}); };
  if (mode == GridMode::axisym) return StructuredGrid::axisym(n, make_axis(cfg, 0.0, L, {{0.0, h}}, {}), along(n - 1));
  std::vector<std::vector<double>> axes;
  for (int i = 0; i < n; ++i) axes.push_back(along(i));
  return StructuredGrid::full(axes);
}

inline void harmonic_exterior(Context& ctx) {
  const auto& cfg = ctx.cfg;
  json& rep = ctx.out.report;
  const auto sv = cfg.list("harmonic", "semi_axes");
  const auto cv = cfg.list("harmonic", "center");
  require(sv.size() >= 3 && cv.size() == sv.size(), ErrorKind::config_error,
          "harmonic: semi_axes and center need the same length >= 3");
  const Point semi = to_point(sv), centre = to_point(cv);
  const int n = static_cast<int>(semi.size());
  for (double a : sv) require(a > 0.0, ErrorKind::config_error, "harmonic.semi_axes must be positive");
  const auto body = harmonic_body(semi, centre);
  require(body->contains(Point::Zero(n)), ErrorKind::config_error, "harmonic: the body must contain the origin");
  const double R_out = cfg.real("harmonic", "R_out");
  const auto t_list = cfg.list("harmonic", "t_list");
  for (double t : t_list) require(t >= 0.0 && t <= 1.0, ErrorKind::config_error, "harmonic.t_list entries in [0, 1]");
  const auto mode = pick_mode(cfg, axisym_compatible(sv, centre), true);
  const auto grid = harmonic_grid(cfg, centre, R_out, mode);
  const auto opts = solver_from(cfg);
  const bool is_ball = dynamic_cast<const Ball*>(body.get()) != nullptr;
  rep["derived"] = {{"body", is_ball ? "ball" : "ellipsoid"},
                    {"n", n},
                    {"grid", {{"mode", to_string(grid.mode())}, {"nodes", grid.size()}, {"min_spacing", min_spacing(grid)}}}};
  ctx.watch.lap("setup");

  const auto sol = solve_harmonic_exterior(body, R_out, grid, opts);
  json solves = json::array();
  solves.push_back({{"label", "main"}, {"report", to_json(sol.report)}});
  ctx.check("solve converged", sol.report.converged, sol.report.residual_inf, "<=", sol.report.tol);
  ctx.check("maximum principle 0 < u < 1", sol.maximum_principle, sol.max_value, "<", 1.0);
  std::optional<HarmonicSolution> fine;
  double tol_h = 0.0;
  if (cfg.boolean("grid", "refine")) {
    fine = solve_harmonic_exterior(body, R_out, grid.refined(), opts);
    solves.push_back({{"label", "refined"}, {"report", to_json(fine->report)}});
    tol_h = richardson_tol(sol.field, fine->field);
  }
  rep["solves"] = solves;
  ctx.watch.lap("solve");

  const GridFieldView view(sol.field);
  json analysis;
  analysis["tol_h"] = tol_h;
  const auto fit = fit_asymptotic_M(view, cfg.list("harmonic", "fit_radii"), *body, cfg.real("harmonic", "fit_tol"));
  analysis["asymptotic_M"] = {{"M", fit.M},         {"shell_M", fit.shell_M}, {"radii", fit.radii},
                              {"spread", fit.residual}, {"r_in", fit.r_in},   {"r_out", fit.r_out},
                              {"sandwich_ok", fit.sandwich_ok}, {"tol", cfg.real("harmonic", "fit_tol")}};
  {
    // a ball sits on both bounds, so the check uses the extrapolated M with its own tol_h
    double M = fit.M, tol_M = 0.0;
    if (fine) {
      const double Mf =
          fit_asymptotic_M(GridFieldView(fine->field), fit.radii, *body, cfg.real("harmonic", "fit_tol")).M;
      M = (4.0 * Mf - fit.M) / 3.0;
      tol_M = 4.0 / 3.0 * std::abs(fit.M - Mf);
      analysis["asymptotic_M"]["M_refined"] = Mf;
      analysis["asymptotic_M"]["M_extrapolated"] = M;
      analysis["asymptotic_M"]["tol_h"] = tol_M;
    }
    const double excess = std::max({std::pow(fit.r_in, n - 2) - M, M - std::pow(fit.r_out, n - 2), 0.0});
    ctx.check_le("r^{n-2} <= M <= R^{n-2} (excess)", excess, tol_M);
  }
  const auto K = curvature_asymptotic_fit(view, cfg.list("harmonic", "curvature_shells"));
  analysis["curvature"] = to_json(K);
  ctx.check_le("|K |x|^{n-1} - 1| at the outermost shell", std::abs(K.outer_scaled - 1.0),
               cfg.real("harmonic", "curvature_tol"));
  ctx.check("min K > 0 on the curvature shells", K.min_K > 0.0, K.min_K, ">", 0.0);
  ctx.watch.lap("asymptotics");

  if (is_ball) {
    // exact solution (r/|x|)^{n-2}
    const double r = semi[0];
    auto err = [&](const GridField& f) {
      double e = 0.0;
      for (std::size_t i = 0; i < f.unknowns.size(); ++i) {
        const double rr = f.grid().ambient(f.disc->node_of(i)).norm();
        e = std::max(e, std::abs(f.unknowns[i] - std::pow(r / rr, n - 2)));
      }
      return e;
    };
    json ball = {{"max_error", err(sol.field)}, {"M_exact", std::pow(r, n - 2)}};
    ctx.check_le("ball: |M - r^{n-2}| / r^{n-2}", std::abs(fit.M - std::pow(r, n - 2)) / std::pow(r, n - 2),
                 cfg.real("harmonic", "fit_tol"));
    double kdev = 0.0;
    for (const auto& sh : K.shells) kdev = std::max(kdev, sh.max_deviation);
    ball["max_K_deviation"] = kdev;
    ctx.check_le("ball: max |K |x|^{n-1} - 1| on the shells", kdev, cfg.real("harmonic", "curvature_tol"));
    if (fine) {
      const double ef = err(fine->field);
      const double order = std::log2(err(sol.field) / ef);
      ball["max_error_refined"] = ef;
      ball["observed_order"] = order;
      ctx.check_ge("ball: observed order of the nodal error", order, cfg.real("radial", "min_order"));
    }
    analysis["ball_control"] = ball;
  }

  json sup = json::array();
  const auto sp = slice_from(cfg, Point::Zero(n), cfg.real("analysis", "slice_half"));
  json contours = json::array();
  for (double t : cfg.list("harmonic", "superlevels")) {
    auto so = sampler_from(cfg);
    so.superlevel = true;
    const auto r = sublevel_convexity_check(view, t, tol_h, so);
    sup.push_back(to_json(r));
    ctx.check("superlevel set convex at t = " + num(t), r.verdict == Verdict::convex_up_to_tol, r.worst_excess, "<=",
              3.0 * tol_h);
    for (auto& c : ctx.contour(view, t, sp)) contours.push_back(c);
  }
  analysis["superlevel_tests"] = sup;
  analysis["contours"] = contours;
  ctx.watch.lap("superlevel tests");

  if (fine) {
    const GridFieldView fview(fine->field);
    const auto sh = superharmonicity_check(view, &fview, cfg.real("harmonic", "lap_r_lo"), cfg.real("harmonic", "lap_r_hi"));
    json nonpos = json::array();
    for (const auto& x : sh.nonpositive_K) nonpos.push_back(jpoint(x));
    analysis["superharmonicity"] = {{"probes", sh.probes},   {"max_laplacian", jnum(sh.max_laplacian)},
                                    {"tol_lap", sh.tol_lap}, {"min_K", jnum(sh.min_K)},
                                    {"nonpositive_K", nonpos}, {"passes", sh.passes}};
    ctx.check("K > 0 at every probe", sh.nonpositive_K.empty() && sh.probes > 0, sh.min_K, ">", 0.0);
    ctx.check_le("max Delta_h psi_ms <= tol_lap", sh.max_laplacian, sh.tol_lap);
    ctx.watch.lap("superharmonicity");
  }
  ctx.out.field_csv = field_csv(sol.field);

  if (ctx.mode == Mode::sweep) {
    require(!t_list.empty(), ErrorKind::config_error, "sweep: harmonic-exterior needs harmonic.t_list");
    const Ball unit(Point::Zero(n), 1.0);
    const auto ell = Ellipsoid::from_semi_axes(centre, semi);
    json rows = json::array();
    for (double t : t_list) {
      auto bt = std::make_shared<MinkowskiBody>(minkowski_interpolant(unit, ell, t));
      const auto st = solve_harmonic_exterior(bt, R_out, grid, opts);
      const GridFieldView vt(st.field);
      const auto ft = fit_asymptotic_M(vt, cfg.list("harmonic", "fit_radii"), *bt, cfg.real("harmonic", "fit_tol"));
      const auto kt = curvature_asymptotic_fit(vt, cfg.list("harmonic", "curvature_shells"));
      rows.push_back({{"t", t}, {"M", ft.M}, {"sandwich_ok", ft.sandwich_ok}, {"min_K", kt.min_K},
                      {"outer_scaled", kt.outer_scaled}, {"solve", to_json(st.report)}});
      ctx.sweep_row("t", t, "M", ft.M);
      ctx.sweep_row("t", t, "min_K", kt.min_K);
      ctx.sweep_row("t", t, "K_scaled_outer", kt.outer_scaled);
      ctx.check("t = " + num(t) + ": min K > 0", kt.min_K > 0.0, kt.min_K, ">", 0.0);
      ctx.watch.lap("t sweep " + num(t));
    }
    rep["sweep"] = {{"family", "t"}, {"rows", rows}};
  }
  rep["analysis"] = analysis;
}

// ---------------------------------------------------------------- radial control

inline void radial_control(Context& ctx) {
  const auto& cfg = ctx.cfg;
  json& rep = ctx.out.report;
  const int n = static_cast<int>(cfg.integer("spec", "n"));
  const int k = static_cast<int>(cfg.integer("spec", "k"));
  const auto spec = SymSpec::isotropic(n, k);
  const double r = cfg.real("radial", "r"), rho_out = cfg.real("radial", "rho_out");
  const double alpha = cfg.real("radial", "alpha"), half = cfg.real("radial", "half");
  const auto hs = cfg.list("radial", "h_list");
  require(!hs.empty() && std::is_sorted(hs.rbegin(), hs.rend()), ErrorKind::config_error,
          "radial.h_list must be non-empty and decreasing");
  require(0.0 < r && r < rho_out && rho_out < half, ErrorKind::config_error, "radial: need 0 < r < rho_out < half");
  require(alpha >= 0.0, ErrorKind::config_error, "radial.alpha must be >= 0");
  const auto mode = pick_mode(cfg, true, n >= 4);
  rep["derived"] = spec_json(spec);
  rep["derived"]["grid_mode"] = to_string(mode);
  ctx.watch.lap("setup");

  json rows = json::array(), solves = json::array();
  std::vector<double> errs;
  std::optional<GridField> finest;
  for (double h : hs) {
    StructuredGrid g = mode == GridMode::axisym
                           ? StructuredGrid::axisym(n, uniform_axis(0.0, half, h), uniform_axis(-half, half, h, {0.0}))
                           : StructuredGrid::full(std::vector<std::vector<double>>(static_cast<std::size_t>(n),
                                                                                  uniform_axis(-half, half, h, {0.0})));
    const auto sol = solve_concentric(spec, r, rho_out, alpha, g, solver_from(cfg));
    ctx.check("solve converged at h = " + num(h), sol.report.converged, sol.report.residual_inf, "<=", sol.report.tol);
    json row = {{"h", h}, {"max_error", sol.max_error}, {"unknowns", sol.report.unknowns}};
    if (!errs.empty()) row["observed_order"] = std::log(errs.back() / sol.max_error) / std::log(hs[errs.size() - 1] / h);
    errs.push_back(sol.max_error);
    rows.push_back(row);
    solves.push_back({{"label", "h=" + num(h)}, {"report", to_json(sol.report)}});
    ctx.sweep_row("h", h, "max_error", sol.max_error);
    finest = sol.field;
    ctx.watch.lap("solve h=" + num(h));
  }
  const double min_order = cfg.real("radial", "min_order");
  for (std::size_t i = 1; i < errs.size(); ++i) {
    const double order = std::log(errs[i - 1] / errs[i]) / std::log(hs[i - 1] / hs[i]);
    ctx.sweep_row("h", hs[i], "observed_order", order);
    ctx.check_ge("observed order h = " + num(hs[i - 1]) + " -> " + num(hs[i]), order, min_order);
  }
  rep["solves"] = solves;
  json analysis;
  analysis["convergence"] = rows;

  const GridFieldView view(*finest);
  const double umax = max_active(*finest);
  json levels = json::array();
  json contours = json::array();
  const auto sp = slice_from(cfg, Point::Zero(n), cfg.real("analysis", "slice_half"));
  for (double f : cfg.list("analysis", "level_fractions")) {
    const double t = f * umax;
    const auto rr = sublevel_convexity_check(view, t, 0.0, sampler_from(cfg));
    json j = to_json(rr);
    j["fraction"] = f;
    levels.push_back(j);
    ctx.check("sublevel set convex at fraction " + num(f), rr.verdict == Verdict::convex_up_to_tol, rr.worst_excess,
              "<=", 0.0);
    for (auto& c : ctx.contour(view, t, sp)) contours.push_back(c);
  }
  analysis["sublevel_tests"] = levels;
  analysis["contours"] = contours;
  rep["analysis"] = analysis;
  ctx.out.field_csv = field_csv(*finest);
  ctx.watch.lap("analysis");
}

// ---------------------------------------------------------------- normalization demo

inline void normalize_demo(Context& ctx) {
  const auto& cfg = ctx.cfg;
  json& rep = ctx.out.report;
  const int n = static_cast<int>(cfg.integer("spec", "n"));
  const int k = static_cast<int>(cfg.integer("spec", "k"));
  const auto Av = cfg.list("spec", "A");
  auto bv = cfg.list("spec", "b");
  require(static_cast<int>(Av.size()) == n * n, ErrorKind::config_error, "spec.A must have n*n entries");
  if (bv.empty()) bv.assign(static_cast<std::size_t>(n), 0.0);
  require(static_cast<int>(bv.size()) == n, ErrorKind::config_error, "spec.b must have n entries");
  Matrix A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = Av[static_cast<std::size_t>(i * n + j)];
  const Point b = to_point(bv);
  const double c = cfg.real("spec", "c");
  const auto np = normalize_problem(A, b, c);
  json P = json::array();
  for (int i = 0; i < n; ++i) {
    json row = json::array();
    for (int j = 0; j < n; ++j) row.push_back(np.P(i, j));
    P.push_back(row);
  }
  json out = {{"Lambda", jpoint(np.Lambda)}, {"P", P}, {"y0", jpoint(np.y0)}, {"c_hat", np.c_hat}};
  // the reduced form must reproduce the original polynomial
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.integer("analysis", "seed")));
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 64; ++trial) {
    Point x(n);
    for (int i = 0; i < n; ++i) x[i] = U(rng);
    const double orig = 0.5 * x.dot(A * x) + b.dot(x) + c;
    const double red = np.value_normalized(np.to_normalized(x));
    worst = std::max(worst, std::abs(orig - red) / (1.0 + std::abs(orig)));
  }
  out["max_relative_mismatch"] = worst;
  ctx.check_le("normalized form reproduces the polynomial", worst, 1e-10);
  std::vector<double> lam(np.Lambda.data(), np.Lambda.data() + n);
  try {
    out["scaled_spec"] = spec_json(SymSpec::normalized(n, k, lam));
  } catch (const Error& e) {
    out["scaled_spec"] = {{"admissible", false}, {"reason", e.what()}};
  }
  rep["analysis"] = {{"normalization", out}};
  ctx.watch.lap("normalize");
}

}  // namespace detail

/// Runs the configured pipeline. Throws khlab::Error on invalid configuration or
/// module failure; nothing is written here.
inline RunResult execute(const Config& cfg, Mode mode) {
  RunResult out;
  detail::Context ctx(cfg, mode, out);
  const auto& problem = cfg.text("experiment", "problem");
  out.report["tool"] = "khlab";
  out.report["command"] = mode == Mode::run ? "run" : "sweep";
  out.report["problem"] = problem;
  out.report["config_hash"] = config_hash(cfg);
  out.report["config"] = detail::config_json(cfg);
  if (problem == "khessian-ring")
    detail::khessian_ring(ctx);
  else if (problem == "khessian-exterior-sweep")
    detail::khessian_exterior_sweep(ctx);
  else if (problem == "harmonic-exterior")
    detail::harmonic_exterior(ctx);
  else if (problem == "radial-control")
    detail::radial_control(ctx);
  else
    detail::normalize_demo(ctx);
  json checks = json::array();
  for (const auto& c : out.checks)
    checks.push_back({{"name", c.name},
                      {"pass", c.pass},
                      {"value", detail::jnum(c.value)},
                      {"relation", c.relation},
                      {"tolerance", detail::jnum(c.tolerance)}});
  out.report["checks"] = checks;
  out.report["passed"] = out.passed();
  if (!ctx.contours.empty()) out.contours_csv = "x,y,polyline_id\n" + ctx.contours;
  if (!ctx.sweep_rows.empty()) out.sweep_csv = "family,parameter,metric,value\n" + ctx.sweep_rows;
  ctx.watch.finish();
  out.timing["threads"] = worker_count();
  return out;
}

inline void write_outputs(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const char* name, const std::string& body) {
    if (body.empty()) return;
    std::ofstream f(dir / name, std::ios::binary);
    f << body;
    require(static_cast<bool>(f), ErrorKind::config_error, std::string("cannot write ") + (dir / name).string());
  };
  put("report.json", r.report.dump(2) + "\n");
  put("timing.json", r.timing.dump(2) + "\n");
  put("field.csv", r.field_csv);
  put("contours.csv", r.contours_csv);
  put("sweep.csv", r.sweep_csv);
}

/// Loads, runs and writes; returns the process exit code (0 iff all checks pass,
/// 1 on failed checks, 2 on configuration or module errors).
inline int run_file(const std::string& path, Mode mode, const std::string& output_override = {},
                    std::ostream& log = std::cerr) {
  try {
    const auto cfg = Config::load(path);
    const std::filesystem::path dir = output_override.empty() ? cfg.text("experiment", "output") : output_override;
    const auto result = execute(cfg, mode);
    write_outputs(result, dir);
    for (const auto& c : result.checks)
      log << (c.pass ? "ok   " : "FAIL ") << c.name << ": " << detail::num(c.value) << " " << c.relation << " "
          << detail::num(c.tolerance) << "\n";
    log << "wrote " << dir.string() << "/report.json\n";
    return result.passed() ? 0 : 1;
  } catch (const Error& e) {
    log << json{{"error", to_string(e.kind())}, {"message", e.what()}, {"config", path}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    log << json{{"error", "internal"}, {"message", e.what()}, {"config", path}}.dump() << "\n";
    return 2;
  }
}

}  // namespace khlab::lab

#pragma once

// Finite-difference derivative functionals on a classified structured grid.
// Every first and second derivative at an active node is an affine function of
// the unknown nodal values; boundary crossings enter through Shortley-Weller
// arms whose end value is beta + gamma * u(node).

#include "khlab/common.hpp"
#include "khlab/geometry.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace khlab {

/// Value at a boundary crossing, affine in the value at the node the arm starts from.
struct ArmValue {
  double beta = 0.0;
  double gamma = 0.0;
};

struct BoundaryCondition {
  BoundaryPiece piece;
  /// (node ambient point, crossing ambient point) -> value at the crossing.
  std::function<ArmValue(const Point&, const Point&)> value;
};

inline BoundaryCondition dirichlet(BoundaryPiece piece, std::function<double(const Point&)> g) {
  BoundaryCondition bc;
  bc.piece = std::move(piece);
  bc.value = [g = std::move(g)](const Point&, const Point& at) { return ArmValue{g(at), 0.0}; };
  return bc;
}

inline BoundaryCondition dirichlet_constant(BoundaryPiece piece, double value) {
  return dirichlet(std::move(piece), [value](const Point&) { return value; });
}

/// Far-field closure exact for c |x|^(2-n): u(B) = u(P) (|P| / |B|)^(n-2).
inline BoundaryCondition monopole_closure(BoundaryPiece piece, int n) {
  BoundaryCondition bc;
  bc.piece = std::move(piece);
  bc.value = [n](const Point& node, const Point& at) {
    return ArmValue{0.0, std::pow(node.norm() / at.norm(), n - 2)};
  };
  return bc;
}

struct StencilTerm {
  std::uint32_t unknown;
  double w;
};

/// Entry of the n x n Hessian: coef * feature placed at (row, col).
struct HessianSlot {
  int feature;
  int row;
  int col;
  double coef;
};

struct DiscretizationOptions {
  bool mixed = true;            // build mixed second derivatives
  double obstacle_value = 0.0;  // extension value inside the inner body
  double min_arm_fraction = 1e-10;
  // active nodes closer than this fraction of a cell to a Dirichlet boundary
  // take the boundary value themselves (avoids near-zero Shortley-Weller arms)
  double snap_fraction = 1e-3;
};

/// Classified grid together with the derivative functionals at every active node.
class Discretization {
 public:
  Discretization(StructuredGrid grid, BoundaryCondition inner, BoundaryCondition outer,
                 DiscretizationOptions opts = {})
      : grid_(std::move(grid)), inner_(std::move(inner)), outer_(std::move(outer)), opts_(opts) {
    cls_ = classify(grid_, inner_.piece, outer_.piece);
    snap();
    build();
  }

  /// Reuses a classification computed elsewhere (e.g. classify_nodes on a ring).
  Discretization(StructuredGrid grid, NodeClassification cls, BoundaryCondition inner, BoundaryCondition outer,
                 DiscretizationOptions opts = {})
      : grid_(std::move(grid)), cls_(std::move(cls)), inner_(std::move(inner)), outer_(std::move(outer)), opts_(opts) {
    snap();
    build();
  }

  const StructuredGrid& grid() const { return grid_; }
  const NodeClassification& classification() const { return cls_; }
  const DiscretizationOptions& options() const { return opts_; }
  const BoundaryPiece& inner_piece() const { return inner_.piece; }
  const BoundaryPiece& outer_piece() const { return outer_.piece; }
  int n() const { return grid_.ambient_dim(); }
  std::size_t unknowns() const { return node_of_.size(); }
  std::int64_t unknown_of(std::size_t node) const { return unknown_of_[node]; }
  std::size_t node_of(std::size_t unknown) const { return node_of_[unknown]; }
  int mixed_fallbacks() const { return mixed_fallbacks_; }
  std::size_t snapped() const { return snapped_; }

  int features() const { return nfeat_; }
  int first_feature(int d) const { return d; }
  int second_feature(int d) const { return grid_.dims() + d; }
  /// Mixed feature for grid axes d < e, or -1 when not built.
  int mixed_feature(int d, int e) const {
    if (!opts_.mixed) return -1;
    const int D = grid_.dims();
    int idx = 2 * D;
    for (int a = 0; a < D; ++a)
      for (int b = a + 1; b < D; ++b, ++idx)
        if (a == d && b == e) return idx;
    return -1;
  }
  /// u_rho / rho feature in axisymmetric mode.
  int rho_feature() const { return grid_.mode() == GridMode::axisym ? nfeat_ - 1 : -1; }
  const std::vector<HessianSlot>& hessian_slots() const { return slots_; }
  /// Features that enter the Hessian.
  const std::vector<int>& hessian_features() const { return hess_feats_; }

  std::span<const StencilTerm> terms(std::size_t unknown, int feature) const {
    const std::size_t f = unknown * static_cast<std::size_t>(nfeat_) + static_cast<std::size_t>(feature);
    return {terms_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
  }
  double constant(std::size_t unknown, int feature) const {
    return const_[unknown * static_cast<std::size_t>(nfeat_) + static_cast<std::size_t>(feature)];
  }
  double evaluate(std::size_t unknown, int feature, const std::vector<double>& u) const {
    double v = constant(unknown, feature);
    for (const auto& t : terms(unknown, feature)) v += t.w * u[t.unknown];
    return v;
  }

  /// Grid-space Hessian at an unknown assembled into the n x n ambient matrix.
  Matrix hessian(std::size_t unknown, const std::vector<double>& u) const {
    Matrix m = Matrix::Zero(n(), n());
    for (const auto& s : slots_) m(s.row, s.col) += s.coef * evaluate(unknown, s.feature, u);
    return m;
  }

  /// Nodal values from unknowns: active nodes from u, obstacle nodes get the
  /// extension value, exterior nodes NaN.
  std::vector<double> scatter(const std::vector<double>& u) const {
    std::vector<double> v(grid_.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (unknown_of_[i] >= 0)
        v[i] = u[static_cast<std::size_t>(unknown_of_[i])];
      else if (cls_.labels[i] == NodeClass::obstacle)
        v[i] = opts_.obstacle_value;
    }
    return v;
  }
  std::vector<double> gather(const std::vector<double>& nodal) const {
    std::vector<double> u(unknowns());
    for (std::size_t k = 0; k < unknowns(); ++k) u[k] = nodal[node_of_[k]];
    return u;
  }

 private:
  struct Ref {
    std::int64_t unknown = -1;  // neighbour unknown, or -1 for a boundary value
    double beta = 0.0;
    double gamma = 0.0;
  };
  struct Arm {
    double h = 0.0;
    Ref ref;
    bool cut = false;  // shortened by a boundary
  };
  struct Acc {
    double c = 0.0;
    std::vector<StencilTerm> t;
  };

  void add(Acc& acc, const Ref& r, double w, std::uint32_t self) const {
    if (r.unknown >= 0) {
      acc.t.push_back({static_cast<std::uint32_t>(r.unknown), w});
    } else {
      acc.c += w * r.beta;
      if (r.gamma != 0.0) acc.t.push_back({self, w * r.gamma});
    }
  }

  /// Neighbour node along axis d at offset s, with reflection through the axis in
  /// axisymmetric mode; -1 when outside the grid.
  std::int64_t neighbour(const std::vector<int>& m, int d, int s) const {
    auto q = m;
    q[static_cast<std::size_t>(d)] += s;
    if (grid_.mode() == GridMode::axisym && d == 0 && q[0] < 0) q[0] = -q[0];
    if (q[static_cast<std::size_t>(d)] < 0 || q[static_cast<std::size_t>(d)] >= grid_.extent(d)) return -1;
    return static_cast<std::int64_t>(grid_.linear(q));
  }

  Arm arm(std::size_t node, const std::vector<int>& m, int d, int s) const {
    const std::int64_t nb = neighbour(m, d, s);
    require(nb >= 0, ErrorKind::domain_too_tight, "active node on the grid edge");
    const auto nbu = static_cast<std::size_t>(nb);
    const auto& ax = grid_.axis(d);
    const int i = m[static_cast<std::size_t>(d)];
    Arm a;
    if (grid_.mode() == GridMode::axisym && d == 0 && i == 0)
      a.h = ax[1];
    else
      a.h = std::abs(ax[static_cast<std::size_t>(i + s)] - ax[static_cast<std::size_t>(i)]);
    if (unknown_of_[nbu] >= 0) {
      a.ref.unknown = unknown_of_[nbu];
      return a;
    }
    const Point x = grid_.ambient(node);
    const Point y = grid_.ambient(nbu);
    const BoundaryCondition* bc = cls_.labels[nbu] == NodeClass::obstacle ? &inner_ : &outer_;
    // a snapped neighbour sits on the boundary itself
    const double theta_raw = bc->piece.side(y) > 0.0 ? 1.0 : bc->piece.crossing(x, y);
    double theta = theta_raw;
    theta = std::clamp(theta, opts_.min_arm_fraction, 1.0);
    const Point at = x + theta * (y - x);
    const ArmValue v = bc->value(x, at);
    a.h *= theta;
    a.cut = true;
    a.ref.beta = v.beta;
    a.ref.gamma = v.gamma;
    return a;
  }

  void snap() {
    snapped_ = 0;
    if (opts_.snap_fraction <= 0.0) return;
    std::vector<std::pair<std::size_t, NodeClass>> moves;
    for (std::size_t node = 0; node < grid_.size(); ++node) {
      if (!cls_.active(node)) continue;
      const auto m = grid_.multi(node);
      const Point x = grid_.ambient(node);
      for (int d = 0; d < grid_.dims(); ++d)
        for (int s : {-1, 1}) {
          const std::int64_t nb = neighbour(m, d, s);
          if (nb < 0 || cls_.active(static_cast<std::size_t>(nb))) continue;
          const auto lab = cls_.labels[static_cast<std::size_t>(nb)];
          const BoundaryCondition& bc = lab == NodeClass::obstacle ? inner_ : outer_;
          const Point y = grid_.ambient(static_cast<std::size_t>(nb));
          if (bc.piece.side(y) > 0.0) continue;
          const double theta = bc.piece.crossing(x, y);
          if (theta >= opts_.snap_fraction) continue;
          const Point at = x + theta * (y - x);
          if (bc.value(x, at).gamma != 0.0) continue;  // only Dirichlet data can be moved onto the node
          moves.emplace_back(node, lab);
        }
    }
    for (const auto& [node, lab] : moves) {
      if (cls_.labels[node] == lab) continue;
      cls_.labels[node] = lab;
      ++snapped_;
    }
  }

  void build() {
    const int D = grid_.dims();
    const int n = grid_.ambient_dim();
    const bool axisym = grid_.mode() == GridMode::axisym;
    nfeat_ = 2 * D + (opts_.mixed ? D * (D - 1) / 2 : 0) + (axisym ? 1 : 0);

    // Hessian layout in the n x n matrix
    slots_.clear();
    if (axisym) {
      slots_.push_back({second_feature(0), 0, 0, 1.0});
      slots_.push_back({second_feature(1), 1, 1, 1.0});
      if (opts_.mixed) {
        slots_.push_back({mixed_feature(0, 1), 0, 1, 1.0});
        slots_.push_back({mixed_feature(0, 1), 1, 0, 1.0});
      }
      for (int r = 2; r < n; ++r) slots_.push_back({rho_feature(), r, r, 1.0});
    } else {
      for (int d = 0; d < D; ++d) slots_.push_back({second_feature(d), d, d, 1.0});
      if (opts_.mixed)
        for (int d = 0; d < D; ++d)
          for (int e = d + 1; e < D; ++e) {
            slots_.push_back({mixed_feature(d, e), d, e, 1.0});
            slots_.push_back({mixed_feature(d, e), e, d, 1.0});
          }
    }
    hess_feats_.clear();
    for (const auto& s : slots_)
      if (std::find(hess_feats_.begin(), hess_feats_.end(), s.feature) == hess_feats_.end())
        hess_feats_.push_back(s.feature);

    unknown_of_.assign(grid_.size(), -1);
    node_of_.clear();
    for (std::size_t i = 0; i < grid_.size(); ++i)
      if (cls_.active(i)) {
        unknown_of_[i] = static_cast<std::int64_t>(node_of_.size());
        node_of_.push_back(i);
      }
    const std::size_t N = node_of_.size();

    // pass 1: arms and first-derivative functionals everywhere
    arms_.assign(N * static_cast<std::size_t>(D), {});
    firsts_.assign(N * static_cast<std::size_t>(D), {});
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t node = node_of_[k];
      const auto self = static_cast<std::uint32_t>(k);
      const auto m = grid_.multi(node);
      const bool on_axis = axisym && m[0] == 0;
      for (int d = 0; d < D; ++d) {
        auto& a = arms_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
        a[1] = arm(node, m, d, +1);
        a[0] = (on_axis && d == 0) ? a[1] : arm(node, m, d, -1);
        auto& f1 = firsts_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
        if (on_axis && d == 0) continue;  // u_rho = 0 on the axis
        const double hm = a[0].h, hp = a[1].h;
        add(f1, a[0].ref, -hp / (hm * (hm + hp)), self);
        f1.t.push_back({self, (hp - hm) / (hm * hp)});
        add(f1, a[1].ref, hm / (hp * (hm + hp)), self);
      }
    }

    offsets_.assign(1, 0);
    terms_.clear();
    const_.clear();
    offsets_.reserve(N * static_cast<std::size_t>(nfeat_) + 1);
    const_.reserve(N * static_cast<std::size_t>(nfeat_));
    mixed_fallbacks_ = 0;

    std::vector<Acc> acc(static_cast<std::size_t>(nfeat_));
    for (std::size_t k = 0; k < N; ++k) {
      const std::size_t node = node_of_[k];
      const auto self = static_cast<std::uint32_t>(k);
      const auto m = grid_.multi(node);
      for (auto& a : acc) {
        a.c = 0.0;
        a.t.clear();
      }
      const bool on_axis = axisym && m[0] == 0;
      for (int d = 0; d < D; ++d) {
        const auto& a = arms_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
        acc[static_cast<std::size_t>(first_feature(d))] = firsts_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
        const double hm = a[0].h, hp = a[1].h;
        auto& f2 = acc[static_cast<std::size_t>(second_feature(d))];
        add(f2, a[0].ref, 2.0 / (hm * (hm + hp)), self);
        f2.t.push_back({self, -2.0 / (hm * hp)});
        add(f2, a[1].ref, 2.0 / (hp * (hm + hp)), self);
      }
      if (axisym) {
        auto& fr = acc[static_cast<std::size_t>(rho_feature())];
        const auto& src = acc[static_cast<std::size_t>(on_axis ? second_feature(0) : first_feature(0))];
        const double scale = on_axis ? 1.0 : 1.0 / grid_.axis(0)[static_cast<std::size_t>(m[0])];
        fr.c = src.c * scale;
        for (const auto& t : src.t) fr.t.push_back({t.unknown, t.w * scale});
      }
      if (opts_.mixed)
        for (int d = 0; d < D; ++d)
          for (int e = d + 1; e < D; ++e) {
            if (on_axis && d == 0) continue;  // u_rho,z = 0 on the axis
            build_mixed(acc[static_cast<std::size_t>(mixed_feature(d, e))], k, m, d, e);
          }
      for (const auto& a : acc) {
        const_.push_back(a.c);
        terms_.insert(terms_.end(), a.t.begin(), a.t.end());
        offsets_.push_back(terms_.size());
      }
    }
    arms_.clear();
    arms_.shrink_to_fit();
    firsts_.clear();
    firsts_.shrink_to_fit();
  }

  static std::array<double, 3> first_weights(double hm, double hp) {
    return {-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))};
  }

  // u_de: tensor product of three-point first differences when the 3x3 block is
  // active and uncut; otherwise a difference along d of the first-derivative
  // functionals D_e (and along e of D_d), averaged. Both are exact for quadratics.
  void build_mixed(Acc& out, std::size_t k, const std::vector<int>& m, int d, int e) {
    const int D = grid_.dims();
    const auto self = static_cast<std::uint32_t>(k);
    auto unknown_at = [&](int sd, int se) -> std::int64_t {
      auto q = m;
      q[static_cast<std::size_t>(d)] += sd;
      q[static_cast<std::size_t>(e)] += se;
      if (grid_.mode() == GridMode::axisym && q[0] < 0) return -1;
      for (int a = 0; a < D; ++a)
        if (q[static_cast<std::size_t>(a)] < 0 || q[static_cast<std::size_t>(a)] >= grid_.extent(a)) return -1;
      return unknown_of_[grid_.linear(q)];
    };
    const auto& ad = arms_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(d)];
    const auto& ae = arms_[k * static_cast<std::size_t>(D) + static_cast<std::size_t>(e)];
    bool all = !ad[0].cut && !ad[1].cut && !ae[0].cut && !ae[1].cut;
    std::int64_t corner[3][3];
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b) {
        corner[a + 1][b + 1] = (a == 0 && b == 0) ? static_cast<std::int64_t>(self) : unknown_at(a, b);
        all = all && corner[a + 1][b + 1] >= 0;
      }
    if (all) {
      const auto wd = first_weights(ad[0].h, ad[1].h);
      const auto we = first_weights(ae[0].h, ae[1].h);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double w = wd[static_cast<std::size_t>(a)] * we[static_cast<std::size_t>(b)];
          if (w != 0.0) out.t.push_back({static_cast<std::uint32_t>(corner[a][b]), w});
        }
      return;
    }
    // difference along `along` of the first-derivative functional in direction `of`
    auto nested = [&](int along, int of, const std::array<Arm, 2>& arms_along, Acc& res) {
      const std::int64_t um = arms_along[0].cut ? -1 : (along == d ? corner[0][1] : corner[1][0]);
      const std::int64_t up = arms_along[1].cut ? -1 : (along == d ? corner[2][1] : corner[1][2]);
      auto first_of = [&](std::int64_t u) -> const Acc& {
        return firsts_[static_cast<std::size_t>(u) * static_cast<std::size_t>(D) + static_cast<std::size_t>(of)];
      };
      auto accumulate = [&](const Acc& src, double w) {
        res.c += w * src.c;
        for (const auto& t : src.t) res.t.push_back({t.unknown, w * t.w});
      };
      if (um >= 0 && up >= 0) {
        const auto w = first_weights(arms_along[0].h, arms_along[1].h);
        accumulate(first_of(um), w[0]);
        accumulate(first_of(static_cast<std::int64_t>(self)), w[1]);
        accumulate(first_of(up), w[2]);
        return true;
      }
      if (up >= 0 || um >= 0) {
        const bool plus = up >= 0;
        const double h = arms_along[plus ? 1 : 0].h;
        const double sgn = plus ? 1.0 : -1.0;
        accumulate(first_of(plus ? up : um), sgn / h);
        accumulate(first_of(static_cast<std::int64_t>(self)), -sgn / h);
        return true;
      }
      return false;
    };
    Acc a1, a2;
    const bool ok1 = nested(d, e, ad, a1);
    const bool ok2 = nested(e, d, ae, a2);
    if (!ok1 && !ok2) {
      ++mixed_fallbacks_;
      return;
    }
    const double w1 = ok1 && ok2 ? 0.5 : 1.0;
    for (const Acc* src : {ok1 ? &a1 : nullptr, ok2 ? &a2 : nullptr}) {
      if (!src) continue;
      out.c += w1 * src->c;
      for (const auto& t : src->t) out.t.push_back({t.unknown, w1 * t.w});
    }
  }

  StructuredGrid grid_;
  NodeClassification cls_;
  BoundaryCondition inner_, outer_;
  DiscretizationOptions opts_;
  std::vector<std::int64_t> unknown_of_;
  std::vector<std::size_t> node_of_;
  int nfeat_ = 0;
  std::vector<HessianSlot> slots_;
  std::vector<int> hess_feats_;
  std::vector<std::size_t> offsets_;
  std::vector<StencilTerm> terms_;
  std::vector<double> const_;
  int mixed_fallbacks_ = 0;
  std::size_t snapped_ = 0;
  std::vector<std::array<Arm, 2>> arms_;  // build scratch
  std::vector<Acc> firsts_;               // build scratch
};

}  // namespace khlab

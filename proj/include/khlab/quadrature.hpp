#pragma once

#include "khlab/common.hpp"

#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace khlab {

struct QuadResult {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  int intervals = 0;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes on [-1, 1] (positive half, centre last).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
QuadResult gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[static_cast<std::size_t>(j)];
    const double s = f(c - dx) + f(c + dx);
    kron += kWgk[static_cast<std::size_t>(j)] * s;
    if (j % 2 == 1) gauss += kWg[static_cast<std::size_t>(j / 2)] * s;
  }
  QuadResult r;
  r.value = kron * h;
  r.error = std::abs((kron - gauss) * h);
  r.intervals = 1;
  return r;
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod 7/15 quadrature to an absolute tolerance.
/// The returned error is the sum of the per-interval |K15 - G7| estimates.
template <class F>
QuadResult integrate(F&& f, double a, double b, double abs_tol, int max_intervals = 4000) {
  if (a == b) return {};
  if (b < a) {
    auto r = integrate(f, b, a, abs_tol, max_intervals);
    r.value = -r.value;
    return r;
  }
  struct Piece {
    double a, b, value, error;
    bool operator<(const Piece& o) const { return error < o.error; }
  };
  std::priority_queue<Piece> heap;
  auto first = detail::gk15(f, a, b);
  heap.push({a, b, first.value, first.error});
  double total = first.value;
  double err = first.error;
  int count = 1;
  while (err > abs_tol && count < max_intervals) {
    const Piece top = heap.top();
    heap.pop();
    const double mid = 0.5 * (top.a + top.b);
    const auto left = detail::gk15(f, top.a, mid);
    const auto right = detail::gk15(f, mid, top.b);
    total += left.value + right.value - top.value;
    err += left.error + right.error - top.error;
    heap.push({top.a, mid, left.value, left.error});
    heap.push({mid, top.b, right.value, right.error});
    ++count;
  }
  // recompute sums to shed accumulated cancellation
  QuadResult out;
  out.intervals = count;
  while (!heap.empty()) {
    out.value += heap.top().value;
    out.error += heap.top().error;
    heap.pop();
  }
  return out;
}

}  // namespace khlab

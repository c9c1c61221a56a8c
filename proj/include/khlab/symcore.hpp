#pragma once

// Elementary symmetric polynomials of eigenvalues, the Garding cone and the
// constants a*, h_k(a) attached to a diagonal asymptotic matrix.

#include "khlab/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace khlab {

inline std::span<const double> as_span(const Point& p) {
  return {p.data(), static_cast<std::size_t>(p.size())};
}

/// S_0..S_kmax of `lambda` by the product recurrence over characteristic-polynomial
/// coefficients, skipping entry `skip` when it is a valid index. O(n * kmax).
inline std::vector<double> elem_sym_all(std::span<const double> lambda, int kmax, int skip = -1) {
  std::vector<double> e(static_cast<std::size_t>(kmax) + 1, 0.0);
  e[0] = 1.0;
  int used = 0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (static_cast<int>(i) == skip) continue;
    ++used;
    const double li = lambda[i];
    for (int j = std::min(used, kmax); j >= 1; --j) e[j] += li * e[j - 1];
  }
  return e;
}

/// k-th elementary symmetric polynomial, with S_0 = 1 and S_{-1} = 0.
inline double elem_sym(std::span<const double> lambda, int k) {
  const int n = static_cast<int>(lambda.size());
  require(k >= -1 && k <= n, ErrorKind::invalid_argument,
          "elem_sym: k=" + std::to_string(k) + " outside [-1, " + std::to_string(n) + "]");
  if (k == -1) return 0.0;
  if (k == 0) return 1.0;
  return elem_sym_all(lambda, k).back();
}

/// Gradient of S_k: g_i = S_{k-1}(lambda with the i-th entry removed).
inline std::vector<double> elem_sym_grad(std::span<const double> lambda, int k) {
  const int n = static_cast<int>(lambda.size());
  require(k >= 1 && k <= n, ErrorKind::invalid_argument, "elem_sym_grad: need 1 <= k <= n");
  std::vector<double> g(lambda.size());
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = elem_sym_all(lambda, k - 1, i).back();
  return g;
}

/// True iff S_j(lambda) > 0 for j = 1..k.
inline bool in_gamma_k(std::span<const double> lambda, int k) {
  if (k <= 0) return true;
  k = std::min<int>(k, static_cast<int>(lambda.size()));
  const auto e = elem_sym_all(lambda, k);
  for (int j = 1; j <= k; ++j)
    if (!(e[static_cast<std::size_t>(j)] > 0.0)) return false;
  return true;
}

/// Smallest j-th symmetric function over j = 1..k.
inline double gamma_k_margin(std::span<const double> lambda, int k) {
  const auto e = elem_sym_all(lambda, k);
  double m = e[1];
  for (int j = 2; j <= k; ++j) m = std::min(m, e[static_cast<std::size_t>(j)]);
  return m;
}

/// Shift t >= 0 such that lambda + t*(1,...,1) has S_j >= margin for j <= k.
/// Zero when lambda already satisfies the margin.
inline double gamma_k_shift(std::span<const double> lambda, int k, double margin) {
  std::vector<double> shifted(lambda.begin(), lambda.end());
  auto ok = [&](double t) {
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = lambda[i] + t;
    return gamma_k_margin(shifted, k) >= margin;
  };
  if (ok(0.0)) return 0.0;
  double scale = 0.0;
  for (double l : lambda) {
    require(std::isfinite(l), ErrorKind::singular_point, "gamma_k_shift: non-finite eigenvalue");
    scale = std::max(scale, std::abs(l));
  }
  double hi = std::max(1.0, scale);
  while (!ok(hi)) {
    hi *= 2.0;
    require(std::isfinite(hi), ErrorKind::singular_point, "gamma_k_shift: margin out of reach");
  }
  double lo = 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

/// a* = C(n,k)^(-1/k), so that S_k(a* I) = 1.
inline double a_star(int n, int k) { return std::pow(binomial(n, k), -1.0 / k); }

/// h_k(a) = max_i S_{k-1}(a with a_i = 0) * a_i.
inline double h_k(std::span<const double> a, int k) {
  require(k >= 1 && k <= static_cast<int>(a.size()), ErrorKind::invalid_argument, "h_k: need 1 <= k <= n");
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i)
    best = std::max(best, elem_sym_all(a, k - 1, static_cast<int>(i)).back() * a[i]);
  return best;
}

/// Problem dimensions with a diagonal asymptotic matrix A = diag(a) in A_k.
struct SymSpec {
  int n = 3;
  int k = 1;
  std::vector<double> a;
  double a_star = 0.0;
  double h_k_a = 0.0;

  /// Validates every invariant; throws invalid-argument on violation.
  static SymSpec make(int n, int k, std::vector<double> a) {
    require(n >= 3 && n <= kMaxDim, ErrorKind::invalid_argument, "SymSpec: n must be in [3, 8]");
    require(k >= 1 && k <= n, ErrorKind::invalid_argument, "SymSpec: k must be in [1, n]");
    require(static_cast<int>(a.size()) == n, ErrorKind::invalid_argument, "SymSpec: a must have n entries");
    for (double ai : a) require(ai > 0.0, ErrorKind::invalid_argument, "SymSpec: a must be positive");
    const double sk = elem_sym(a, k);
    require(std::abs(sk - 1.0) <= 1e-12, ErrorKind::invalid_argument,
            "SymSpec: S_k(a) = " + std::to_string(sk) + " is not 1");
    SymSpec s;
    s.n = n;
    s.k = k;
    s.a = std::move(a);
    s.a_star = khlab::a_star(n, k);
    s.h_k_a = khlab::h_k(s.a, k);
    const double ratio = s.decay_exponent();
    require(ratio > 1.0 && ratio <= 0.5 * n + 1e-12, ErrorKind::invalid_argument,
            "SymSpec: k/(2 h_k(a)) = " + std::to_string(ratio) + " outside (1, n/2]");
    if (k == 1)
      require(s.lambda_max() < 0.5, ErrorKind::invalid_argument, "SymSpec: k = 1 requires max a_i < 1/2");
    return s;
  }

  /// Rescales positive `a` by S_k(a)^(-1/k) onto A_k, then validates.
  static SymSpec normalized(int n, int k, std::vector<double> a) {
    require(static_cast<int>(a.size()) == n, ErrorKind::invalid_argument, "SymSpec: a must have n entries");
    for (double ai : a) require(ai > 0.0, ErrorKind::invalid_argument, "SymSpec: a must be positive");
    const double scale = std::pow(elem_sym(a, k), -1.0 / k);
    for (double& ai : a) ai *= scale;
    // one polishing pass removes the rounding left by pow()
    const double fix = std::pow(elem_sym(a, k), -1.0 / k);
    for (double& ai : a) ai *= fix;
    return make(n, k, std::move(a));
  }

  /// The isotropic spec A = a* I.
  static SymSpec isotropic(int n, int k) { return normalized(n, k, std::vector<double>(n, 1.0)); }

  /// Exponent k / (2 h_k(a)) of the subsolution integrand.
  double decay_exponent() const { return k / (2.0 * h_k_a); }
  double lambda_max() const { return *std::max_element(a.begin(), a.end()); }
  double lambda_min() const { return *std::min_element(a.begin(), a.end()); }

  Matrix matrix() const {
    Matrix m = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = a[static_cast<std::size_t>(i)];
    return m;
  }

  /// s = x^T A x / 2.
  double quadratic(const Point& x) const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[static_cast<std::size_t>(i)] * x[i] * x[i];
    return 0.5 * s;
  }
};

/// Draws a diagonal A in A_k: positive entries rescaled by S_k^(-1/k). For k = 1
/// draws are rejected until max a_i < 1/2.
template <class Rng>
SymSpec sample_admissible(int n, int k, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.05, 1.0);
  for (;;) {
    std::vector<double> a(static_cast<std::size_t>(n));
    for (double& ai : a) ai = dist(rng);
    const double scale = std::pow(elem_sym(a, k), -1.0 / k);
    for (double& ai : a) ai *= scale;
    if (k == 1 && *std::max_element(a.begin(), a.end()) >= 0.5) continue;
    return SymSpec::normalized(n, k, std::move(a));
  }
}

/// S_k of a symmetric matrix together with its spectral data.
struct HessianSk {
  double value = 0.0;
  Point lambda;
  Matrix eigenvectors;  // columns
  /// dS_k/dH_ij = sum_m (dS_k/dlambda_m) v_m v_m^T.
  Matrix derivative;
};

inline HessianSk sk_of_hessian(const Matrix& h_in, int k) {
  const auto n = h_in.rows();
  require(h_in.cols() == n && n >= 1, ErrorKind::invalid_argument, "sk_of_hessian: matrix must be square");
  require(k >= 0 && k <= n, ErrorKind::invalid_argument, "sk_of_hessian: k out of range");
  const double scale = std::max(1.0, h_in.cwiseAbs().maxCoeff());
  require((h_in - h_in.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale, ErrorKind::invalid_argument,
          "sk_of_hessian: matrix is not symmetric");
  const Matrix h = 0.5 * (h_in + h_in.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  HessianSk out;
  out.lambda = eig.eigenvalues();
  out.eigenvectors = eig.eigenvectors();
  out.value = elem_sym(as_span(out.lambda), k);
  out.derivative = Matrix::Zero(n, n);
  if (k >= 1) {
    const auto g = elem_sym_grad(as_span(out.lambda), k);
    for (Eigen::Index m = 0; m < n; ++m)
      out.derivative += g[static_cast<std::size_t>(m)] * out.eigenvectors.col(m) * out.eigenvectors.col(m).transpose();
  }
  return out;
}

}  // namespace khlab

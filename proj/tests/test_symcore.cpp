#include "khlab/symcore.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace khlab;

namespace {

// Subset enumeration, independent of the recurrence.
double brute_sk(const std::vector<double>& l, int k) {
  const int n = static_cast<int>(l.size());
  if (k == 0) return 1.0;
  double total = 0.0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    double p = 1.0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) p *= l[static_cast<std::size_t>(i)];
    total += p;
  }
  return total;
}

std::vector<double> random_vec(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(ElemSym, Examples) {
  EXPECT_DOUBLE_EQ(elem_sym(std::vector<double>{1, 1, 1, 1}, 2), 6.0);
  EXPECT_DOUBLE_EQ(elem_sym(std::vector<double>{1, 2, 3}, 2), 11.0);
  EXPECT_DOUBLE_EQ(elem_sym(std::vector<double>{4, -2}, 0), 1.0);
  EXPECT_DOUBLE_EQ(elem_sym(std::vector<double>{4, -2}, -1), 0.0);
  EXPECT_THROW(elem_sym(std::vector<double>{1, 2}, 3), Error);
  EXPECT_THROW(elem_sym(std::vector<double>{1, 2}, -2), Error);
}

TEST(ElemSym, MatchesEnumeration) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    const auto l = random_vec(rng, n);
    for (int k = 0; k <= n; ++k) EXPECT_NEAR(elem_sym(l, k), brute_sk(l, k), 1e-10 * (1 + std::abs(brute_sk(l, k))));
  }
}

TEST(ElemSym, LargeN) {
  std::vector<double> ones(64, 1.0);
  EXPECT_NEAR(elem_sym(ones, 3), 41664.0, 1e-9);
}

TEST(ElemSymGrad, Examples) {
  const auto g = elem_sym_grad(std::vector<double>{1, 2, 3}, 2);
  EXPECT_DOUBLE_EQ(g[0], 5.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  EXPECT_DOUBLE_EQ(g[2], 3.0);
  for (double gi : elem_sym_grad(std::vector<double>(5, 0.7), 1)) EXPECT_DOUBLE_EQ(gi, 1.0);
}

TEST(ElemSymGrad, EulerAndRecursion) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 7);
    const auto l = random_vec(rng, n);
    for (int k = 1; k <= n; ++k) {
      const auto g = elem_sym_grad(l, k);
      double euler = 0.0;
      for (int i = 0; i < n; ++i) euler += l[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
      const double sk = brute_sk(l, k);
      EXPECT_NEAR(euler, k * sk, 1e-10 * (1 + std::abs(k * sk)));
      for (int i = 0; i < n; ++i) {
        auto rest = l;
        rest.erase(rest.begin() + i);
        const double rec = brute_sk(rest, k) + l[static_cast<std::size_t>(i)] * brute_sk(rest, k - 1);
        EXPECT_NEAR(elem_sym(l, k), rec, 1e-10 * (1 + std::abs(rec)));
      }
    }
  }
}

TEST(GammaK, Examples) {
  EXPECT_TRUE(in_gamma_k(std::vector<double>{1, 1, 1}, 3));
  EXPECT_FALSE(in_gamma_k(std::vector<double>{-1, -1, -1}, 1));
  EXPECT_TRUE(in_gamma_k(std::vector<double>{3, 3, -1}, 2));
  EXPECT_FALSE(in_gamma_k(std::vector<double>{3, 3, -1}, 3));
}

TEST(GammaK, Nesting) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto l = random_vec(rng, 5);
    for (int k = 1; k <= 5; ++k)
      if (in_gamma_k(l, k))
        for (int j = 1; j < k; ++j) EXPECT_TRUE(in_gamma_k(l, j));
  }
}

TEST(GammaK, ShiftReachesMargin) {
  std::vector<double> l{2.0, -1.5, -1.0, 0.1};
  const double t = gamma_k_shift(l, 3, 1e-8);
  EXPECT_GT(t, 0.0);
  for (double& x : l) x += t;
  EXPECT_GE(gamma_k_margin(l, 3), 1e-8);
}

TEST(HK, Examples) {
  EXPECT_DOUBLE_EQ(h_k(std::vector<double>{0.1, 0.3, 0.2}, 1), 0.3);
  const double as = 1.0 / std::sqrt(6.0);
  EXPECT_NEAR(h_k(std::vector<double>(4, as), 2), 0.5, 1e-14);
  EXPECT_NEAR(h_k(std::vector<double>{0.4, 0.4, 0.2}, 1), 0.4, 1e-15);
  const auto spec = SymSpec::make(3, 1, {0.4, 0.4, 0.2});
  EXPECT_NEAR(spec.decay_exponent(), 1.25, 1e-14);
  EXPECT_NEAR(SymSpec::isotropic(4, 2).decay_exponent(), 2.0, 1e-12);
}

TEST(SymSpec, RejectsInvalid) {
  EXPECT_THROW(SymSpec::make(3, 1, {0.5, 0.3, 0.2}), Error);   // max a_i = 1/2
  EXPECT_THROW(SymSpec::make(3, 1, {0.4, 0.4, 0.3}), Error);   // S_1 != 1
  EXPECT_THROW(SymSpec::make(2, 1, {0.5, 0.5}), Error);        // n < 3
  EXPECT_THROW(SymSpec::normalized(3, 1, {1.0, 0.01, 0.01}), Error);
}

TEST(SymSpec, AStar) {
  for (int n = 3; n <= 8; ++n)
    for (int k = 1; k <= n; ++k) EXPECT_NEAR(elem_sym(std::vector<double>(n, a_star(n, k)), k), 1.0, 1e-12);
}

TEST(SymSpec, SamplerSatisfiesBound) {
  std::mt19937_64 rng(5);
  for (auto [n, k] : {std::pair{3, 1}, {4, 2}, {5, 2}, {6, 3}}) {
    for (int i = 0; i < 100; ++i) {
      const auto s = sample_admissible(n, k, rng);
      EXPECT_NEAR(elem_sym(s.a, k), 1.0, 1e-12);
      EXPECT_GT(s.decay_exponent(), 1.0);
      EXPECT_LE(s.decay_exponent(), 0.5 * n + 1e-12);
    }
  }
}

TEST(SkOfHessian, Examples) {
  Matrix h = Matrix::Identity(3, 3) / 3.0;
  EXPECT_NEAR(sk_of_hessian(h, 1).value, 1.0, 1e-15);
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1, 2, 3;
  EXPECT_NEAR(sk_of_hessian(d, 3).value, 6.0, 1e-12);
  Matrix bad = d;
  bad(0, 1) = 1.0;
  EXPECT_THROW(sk_of_hessian(bad, 2), Error);
}

TEST(SkOfHessian, RotationInvariantAndDerivative) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4;
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    Matrix h = 0.5 * (m + m.transpose());
    Matrix r(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r(i, j) = g(rng);
    Matrix q = Eigen::HouseholderQR<Matrix>(r).householderQ();
    Matrix rotated = q * h * q.transpose();
    rotated = (0.5 * (rotated + rotated.transpose())).eval();
    const auto a = sk_of_hessian(h, 2);
    const auto b = sk_of_hessian(rotated, 2);
    EXPECT_NEAR(a.value, b.value, 1e-10 * (1 + std::abs(a.value)));
    // directional derivative against central differences
    Matrix e(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) e(i, j) = g(rng);
    e = (0.5 * (e + e.transpose())).eval();
    const double step = 1e-6;
    const double fd = (sk_of_hessian(h + step * e, 2).value - sk_of_hessian(h - step * e, 2).value) / (2 * step);
    EXPECT_NEAR((a.derivative.cwiseProduct(e)).sum(), fd, 1e-6 * (1 + std::abs(fd)));
  }
}

#include <gtest/gtest.h>

#include <memory>

#include "ipgd/costs.hpp"

namespace {

using ipgd::LogisticCost;
using ipgd::Mat;
using ipgd::QuadraticCost;
using ipgd::SeededRng;
using ipgd::Vec;

Mat random_mat(SeededRng& rng, int r, int c) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0, 1);
  return m;
}

// Central finite difference of a scalar function.
template <typename F>
Vec fd_gradient(F&& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

TEST(QuadraticCost, ZeroAtOrigin) {
  QuadraticCost q(Mat::Identity(2, 2));
  EXPECT_DOUBLE_EQ(q.value(Vec::Zero(2)), 0.0);
}

TEST(QuadraticCost, IdentityHessianValue) {
  QuadraticCost q(Mat::Identity(2, 2));
  Vec x(2);
  x << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(q.value(x), 12.5);
}

TEST(QuadraticCost, NqmAllOnesValue) {
  auto agents = ipgd::nqm_build(4, 1);
  EXPECT_NEAR(agents[0]->value(Vec::Ones(4)), 25.0 / 24.0, 1e-15);
}

TEST(QuadraticCost, GradientIsHxMinusB) {
  SeededRng rng(1, 0);
  Mat f = random_mat(rng, 6, 4);
  Vec b = ipgd::draw_normal(rng, 0, 1, 4);
  QuadraticCost q(f, b);
  Vec x = ipgd::draw_normal(rng, 0, 1, 4);
  EXPECT_TRUE(q.gradient(x).isApprox(q.hessian() * x - b, 1e-14));
}

TEST(QuadraticCost, HessMatIndependentOfX) {
  SeededRng rng(2, 0);
  Mat f = random_mat(rng, 5, 3);
  QuadraticCost q(f);
  Mat m = random_mat(rng, 3, 3);
  EXPECT_TRUE(q.hess_mat(Vec::Zero(3), m)
                  .isApprox(q.hess_mat(Vec::Ones(3), m), 1e-14));
}

TEST(NqmBuild, AgentShapes) {
  auto agents = ipgd::nqm_build(100, 10);
  ASSERT_EQ(agents.size(), 10u);
  for (const auto& a : agents) EXPECT_EQ(a->dim(), 100);
}

TEST(NqmBuild, HessiansSumToHarmonicDiagonal) {
  const int d = 4;
  auto agents = ipgd::nqm_build(d, 2);
  Mat sum = Mat::Zero(d, d);
  for (const auto& a : agents) sum += a->hess_mat(Vec::Zero(d), Mat::Identity(d, d));
  Mat expect = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) expect(i, i) = 1.0 / (i + 1);
  EXPECT_TRUE(sum.isApprox(expect, 1e-15));
}

TEST(NqmBuild, IndivisibleThrows) {
  EXPECT_THROW(ipgd::nqm_build(10, 3), ipgd::ConfigError);
}

TEST(DiagonalQuadratic, MatchesDenseEquivalent) {
  SeededRng rng(3, 0);
  Vec diag(5);
  for (int i = 0; i < 5; ++i) diag[i] = rng.uniform(0.1, 2.0);
  ipgd::DiagonalQuadraticCost dq(diag);
  Mat factor = diag.cwiseSqrt().asDiagonal();
  QuadraticCost q(factor);
  Vec x = ipgd::draw_normal(rng, 0, 1, 5);
  Mat m = random_mat(rng, 5, 3);
  EXPECT_NEAR(dq.value(x), q.value(x), 1e-13);
  EXPECT_TRUE(dq.gradient(x).isApprox(q.gradient(x), 1e-13));
  EXPECT_TRUE(dq.hess_mat(x, m).isApprox(q.hess_mat(x, m), 1e-13));
}

TEST(LogisticCost, ValueAtZeroIsNLog2) {
  SeededRng rng(4, 0);
  Mat a = random_mat(rng, 9, 3);
  Vec b(9);
  for (int i = 0; i < 9; ++i) b[i] = i % 2 == 0 ? 1.0 : -1.0;
  LogisticCost c(a, b);
  EXPECT_NEAR(c.value(Vec::Zero(3)), 9.0 * std::log(2.0), 1e-12);
}

TEST(LogisticCost, SingleSampleLimit) {
  Mat a(1, 1);
  a << 1.0;
  Vec b(1);
  b << 1.0;
  LogisticCost c(a, b);
  double prev = c.value(Vec::Zero(1));
  for (double t : {1.0, 5.0, 20.0, 100.0, 800.0}) {
    const double v = c.value(Vec::Constant(1, t));
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_NEAR(prev, 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(c.value(Vec::Constant(1, 1e4))));
}

TEST(LogisticCost, MatchesDirectSummationOracle) {
  SeededRng rng(5, 0);
  Mat a = random_mat(rng, 8, 4);
  Vec b(8);
  for (int i = 0; i < 8; ++i) b[i] = rng.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
  LogisticCost c(a, b);
  Vec x = ipgd::draw_normal(rng, 0, 1, 4);
  double direct = 0.0;
  for (int k = 0; k < 8; ++k)
    direct += std::log(1.0 + std::exp(-b[k] * a.row(k).dot(x)));
  EXPECT_NEAR(c.value(x), direct, 1e-12);
}

TEST(LogisticCost, GradientAtZero) {
  SeededRng rng(6, 0);
  Mat a = random_mat(rng, 7, 3);
  Vec b(7);
  for (int i = 0; i < 7; ++i) b[i] = i < 4 ? 1.0 : -1.0;
  LogisticCost c(a, b);
  Vec expect = Vec::Zero(3);
  for (int k = 0; k < 7; ++k) expect -= 0.5 * b[k] * a.row(k).transpose();
  EXPECT_TRUE(c.gradient(Vec::Zero(3)).isApprox(expect, 1e-12));
}

TEST(LogisticCost, BalancedSymmetryZeroGradient) {
  Mat a(4, 2);
  a << 1, 2, 1, 2, 1, 2, 1, 2;
  Vec b(4);
  b << 1, 1, -1, -1;
  LogisticCost c(a, b);
  EXPECT_NEAR(c.gradient(Vec::Zero(2)).norm(), 0.0, 1e-15);
}

TEST(LogisticCost, SingleSampleHessianQuarter) {
  Mat a = Mat::Zero(1, 3);
  a(0, 0) = 1.0;
  Vec b(1);
  b << 1.0;
  LogisticCost c(a, b);
  Mat h = c.hess_mat(Vec::Zero(3), Mat::Identity(3, 3));
  Mat expect = Mat::Zero(3, 3);
  expect(0, 0) = 0.25;
  EXPECT_TRUE(h.isApprox(expect, 1e-14));
}

TEST(LogisticCost, RejectsBadLabels) {
  Mat a(2, 2);
  a.setOnes();
  Vec b(2);
  b << 1.0, 0.0;
  EXPECT_THROW(LogisticCost(a, b), ipgd::ConfigError);
}

TEST(FiniteDifference, GradientSuite) {
  SeededRng rng(7, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 5 + static_cast<int>(rng.below(6));
    const int d = 2 + static_cast<int>(rng.below(4));
    Mat a = random_mat(rng, n, d);
    Vec b(n);
    for (int i = 0; i < n; ++i) b[i] = rng.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
    LogisticCost c(a, b);
    Vec x = ipgd::draw_normal(rng, 0, 0.5, d);
    Vec g = c.gradient(x);
    Vec fd = fd_gradient([&](const Vec& y) { return c.value(y); }, x);
    EXPECT_LT((g - fd).norm() / std::max(g.norm(), 1e-8), 1e-5);
  }
}

TEST(FiniteDifference, HessianSuite) {
  SeededRng rng(8, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 5 + static_cast<int>(rng.below(6));
    const int d = 2 + static_cast<int>(rng.below(4));
    Mat a = random_mat(rng, n, d);
    Vec b(n);
    for (int i = 0; i < n; ++i) b[i] = rng.uniform(0, 1) < 0.5 ? -1.0 : 1.0;
    LogisticCost c(a, b);
    Vec x = ipgd::draw_normal(rng, 0, 0.5, d);
    Mat h = c.hess_mat(x, Mat::Identity(d, d));
    const double h_step = 1e-5;
    for (int j = 0; j < d; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h_step;
      xm[j] -= h_step;
      Vec col = (c.gradient(xp) - c.gradient(xm)) / (2 * h_step);
      EXPECT_LT((h.col(j) - col).norm() / std::max(h.col(j).norm(), 1e-8),
                1e-4);
    }
  }
}

TEST(FiniteDifference, HessMatColumnsEqualHessVec) {
  SeededRng rng(9, 0);
  Mat a = random_mat(rng, 6, 3);
  Vec b(6);
  for (int i = 0; i < 6; ++i) b[i] = i % 2 ? 1.0 : -1.0;
  LogisticCost c(a, b);
  Vec x = ipgd::draw_normal(rng, 0, 1, 3);
  Mat m = random_mat(rng, 3, 3);
  Mat hm = c.hess_mat(x, m);
  for (int j = 0; j < 3; ++j)
    EXPECT_TRUE(hm.col(j).isApprox(c.hess_vec(x, m.col(j)), 1e-12));
}

TEST(SplitQuadratic, AggregateReconstruction) {
  SeededRng rng(10, 0);
  Mat f = random_mat(rng, 12, 5);
  Vec b = ipgd::draw_normal(rng, 0, 1, 5);
  QuadraticCost whole(f, b, 2.0);
  auto parts = ipgd::split_quadratic(f, 3, b, 2.0);
  Vec x = ipgd::draw_normal(rng, 0, 1, 5);
  double v = 0.0;
  Vec g = Vec::Zero(5);
  Mat h = Mat::Zero(5, 5);
  for (const auto& p : parts) {
    v += p->value(x);
    g += p->gradient(x);
    h += p->hess_mat(x, Mat::Identity(5, 5));
  }
  EXPECT_NEAR(v, whole.value(x), 1e-10 * std::abs(whole.value(x)));
  EXPECT_LT((g - whole.gradient(x)).norm(), 1e-10 * whole.gradient(x).norm());
  EXPECT_TRUE(h.isApprox(whole.hessian(), 1e-10));
}

TEST(Batches, FullIndexSetMatchesWhole) {
  SeededRng rng(11, 0);
  Mat a = random_mat(rng, 8, 3);
  Vec b(8);
  for (int i = 0; i < 8; ++i) b[i] = i % 2 ? 1.0 : -1.0;
  LogisticCost c(a, b);
  std::vector<Eigen::Index> all{0, 1, 2, 3, 4, 5, 6, 7};
  Vec x = ipgd::draw_normal(rng, 0, 1, 3);
  EXPECT_NEAR(c.value_batch(x, all), c.value(x), 1e-12);
  EXPECT_TRUE(c.gradient_batch(x, all).isApprox(c.gradient(x), 1e-12));
  EXPECT_TRUE(c.hess_mat_batch(x, Mat::Identity(3, 3), all)
                  .isApprox(c.hess_mat(x, Mat::Identity(3, 3)), 1e-12));
}

TEST(Batches, UnsupportedCostThrows) {
  ipgd::DiagonalQuadraticCost dq(Vec::Ones(3));
  EXPECT_THROW(dq.gradient_batch(Vec::Zero(3), {0}), ipgd::ConfigError);
}

}  // namespace

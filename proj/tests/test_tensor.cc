#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "arf/rng.h"
#include "arf/tensor.h"

using namespace arf;

namespace {

Tensor random_matrix(int r, int c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ContractViolation);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 3);
}

TEST(Matmul, IdentityTimesIdentity) {
  const Tensor i2 = Tensor::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(kernels::matmul(i2, i2), i2);
}

TEST(Matmul, HandComputed) {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::matrix(2, 1, {0, 1});
  EXPECT_EQ(kernels::matmul(a, b), Tensor::matrix(2, 1, {2, 4}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(3, 4, rng);
    const Tensor b = random_matrix(4, 2, rng);
    const Tensor c = kernels::matmul(a, b);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) {
        double s = 0;
        for (int k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
        EXPECT_NEAR(c.at(i, j), s, 1e-12);
      }
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(2);
  const Tensor a = random_matrix(3, 5, rng);
  const Tensor b = random_matrix(4, 5, rng);
  const Tensor c = random_matrix(3, 4, rng);
  const Tensor nt = kernels::matmul_nt(a, b);
  const Tensor ref = kernels::matmul(a, kernels::transpose(b));
  for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt[i], ref[i], 1e-12);
  const Tensor tn = kernels::matmul_tn(a, c);
  const Tensor ref2 = kernels::matmul(kernels::transpose(a), c);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref2[i], 1e-12);
  EXPECT_THROW(kernels::matmul(a, a), ContractViolation);
}

TEST(Softmax, SymmetricRow) {
  const Tensor s = kernels::softmax_rows(Tensor::matrix(1, 2, {0, 0}));
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  const Tensor s = kernels::softmax_rows(Tensor::matrix(1, 2, {1000, 0}));
  EXPECT_TRUE(s.all_finite());
  EXPECT_NEAR(s[0], 1.0, 1e-300);
  EXPECT_LT(s[1], 1e-300);
}

TEST(Softmax, MatchesExtendedPrecisionOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_matrix(1, 7, rng);
    const Tensor s = kernels::softmax_rows(x);
    long double z = 0;
    for (double v : x.values()) z += std::exp(static_cast<long double>(v));
    for (int k = 0; k < 7; ++k) EXPECT_NEAR(s[k], static_cast<double>(std::exp((long double)x[k]) / z), 1e-12);
  }
}

TEST(Softmax, RowsAreDistributions) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_matrix(4, 6, rng);
    const Tensor s = kernels::softmax_rows(x);
    const Tensor ls = kernels::log_softmax_rows(x);
    for (int r = 0; r < 4; ++r) {
      double total = 0;
      for (int c = 0; c < 6; ++c) {
        EXPECT_GE(s.at(r, c), 0.0);
        EXPECT_LE(s.at(r, c), 1.0);
        EXPECT_NEAR(std::exp(ls.at(r, c)), s.at(r, c), 1e-12);
        total += s.at(r, c);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST(LogSumExp, Examples) {
  const double a = -3.25;
  EXPECT_DOUBLE_EQ(kernels::logsumexp(std::vector<double>{a}), a);
  EXPECT_NEAR(kernels::logsumexp(std::vector<double>{0, 0}), std::log(2.0), 1e-15);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_DOUBLE_EQ(kernels::logsumexp(std::vector<double>{ninf, 0}), 0.0);
  EXPECT_EQ(kernels::logsumexp(std::vector<double>{ninf, ninf}), ninf);
  EXPECT_THROW(kernels::logsumexp(std::vector<double>{}), ContractViolation);
}

TEST(LogSumExp, Bounds) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(1, 10);
    std::vector<double> x(n);
    for (double& v : x) v = 20.0 * rng.normal();
    const double m = *std::max_element(x.begin(), x.end());
    const double l = kernels::logsumexp(x);
    EXPECT_GE(l, m);
    EXPECT_LE(l, m + std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST(Gelu, KnownValues) {
  EXPECT_DOUBLE_EQ(kernels::gelu(0.0), 0.0);
  EXPECT_NEAR(kernels::gelu(1.0), 0.8413447460685429, 1e-12);
  const double h = 1e-6;
  for (double x : {-2.0, -0.5, 0.3, 1.7}) {
    EXPECT_NEAR(kernels::gelu_grad(x), (kernels::gelu(x + h) - kernels::gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitIsIndependentOfConsumptionOrder) {
  Rng parent(9);
  Rng x1 = parent.split("x");
  parent.next_u64();
  parent.next_u64();
  Rng x2 = parent.split("x");
  for (int i = 0; i < 10; ++i) EXPECT_EQ(x1.next_u64(), x2.next_u64());
  EXPECT_NE(Rng(9).split("x").next_u64(), Rng(9).split("y").next_u64());
}

TEST(Rng, StateRoundTrip) {
  Rng a(3);
  a.next_u64();
  Rng b = Rng::from_state(a.key(), a.counter());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformIntCoversRangeAndStaysInside) {
  Rng rng(10);
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const int v = rng.uniform_int(-2, 2);
    ASSERT_GE(v, -2);
    ASSERT_LE(v, 2);
    ++hist[v + 2];
  }
  // Binomial(5000, 0.2): mean 1000, sd ~28.
  for (int h : hist) EXPECT_NEAR(h, 1000, 6 * 28.3);
}

TEST(Rng, NormalMoments) {
  Rng rng(11);
  const int n = 20000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 6.0 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 6.0 * std::sqrt(2.0 / n));
}

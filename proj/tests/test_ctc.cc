#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "arf/ctc.h"
#include "arf/gradcheck.h"

using namespace arf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Tensor log_of(int rows, int cols, std::initializer_list<double> probs) {
  Tensor t = Tensor::matrix(rows, cols, probs);
  for (double& v : t.values()) v = std::log(v);
  return t;
}

Tensor random_log_probs(int rows, int classes, Rng& rng) {
  Tensor t({rows, classes});
  for (double& v : t.values()) v = 2.0 * rng.normal();
  return kernels::log_softmax_rows(t);
}

// Independent oracle: enumerate every frame sequence, collapse it with a
// local implementation of B and sum the probabilities of those that match.
double enumerate_ctc(const Tensor& lp, const std::vector<int>& target) {
  const int t_len = lp.rows(), classes = lp.cols();
  std::vector<int> seq(t_len, 0);
  long double total = 0;
  while (true) {
    std::vector<int> out;
    int prev = -1;
    for (int s : seq) {
      if (s != prev && s != 0) out.push_back(s);
      prev = s;
    }
    if (out == target) {
      long double lpsum = 0;
      for (int t = 0; t < t_len; ++t) lpsum += lp.at(t, seq[t]);
      total += std::exp(lpsum);
    }
    int k = 0;
    while (k < t_len && ++seq[k] == classes) seq[k++] = 0;
    if (k == t_len) break;
  }
  return total > 0 ? -std::log(static_cast<double>(total)) : kInf;
}

}  // namespace

TEST(Ctc, SinglePath) {
  const double q = 0.3;
  const Tensor lp = log_of(1, 2, {0.7, q});
  EXPECT_NEAR(ctc_neg_log_likelihood(lp, LabelSequence{{1}}), -std::log(q), 1e-12);
}

TEST(Ctc, TwoFrameUniform) {
  // Valid alignments: aa, a_, _a, each 0.25.
  const Tensor lp = log_of(2, 2, {0.5, 0.5, 0.5, 0.5});
  const double expected = -std::log(0.75);
  EXPECT_NEAR(expected, 0.287682, 1e-6);
  EXPECT_NEAR(ctc_neg_log_likelihood(lp, LabelSequence{{1}}), expected, 1e-12);
  EXPECT_NEAR(ctc_loss_oracle(lp, LabelSequence{{1}}), expected, 1e-9);
  EXPECT_NEAR(enumerate_ctc(lp, {1}), expected, 1e-12);
}

TEST(Ctc, InfeasibleTarget) {
  const Tensor lp = log_of(1, 3, {0.2, 0.4, 0.4});
  EXPECT_EQ(ctc_neg_log_likelihood(lp, LabelSequence{{1, 2}}), kInf);
  EXPECT_EQ(ctc_loss_oracle(lp, LabelSequence{{1, 2}}), kInf);
  // Repeated labels need a separating blank.
  EXPECT_EQ(ctc_min_frames(LabelSequence{{1, 1}}), 3);
  EXPECT_EQ(ctc_neg_log_likelihood(log_of(2, 2, {0.5, 0.5, 0.5, 0.5}), LabelSequence{{1, 1}}), kInf);
}

TEST(Ctc, EmptyTargetIsAllBlank) {
  const Tensor lp = log_of(2, 3, {0.6, 0.3, 0.1, 0.2, 0.5, 0.3});
  const double expected = -(std::log(0.6) + std::log(0.2));
  EXPECT_NEAR(ctc_neg_log_likelihood(lp, LabelSequence{}), expected, 1e-12);
  EXPECT_NEAR(ctc_loss_oracle(lp, LabelSequence{}), expected, 1e-12);
}

TEST(Ctc, MatchesEnumerationOracle) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const int v = rng.uniform_int(1, 4);
    const int t = rng.uniform_int(1, 6);
    const Tensor lp = random_log_probs(t, v + 1, rng);
    LabelSequence target;
    for (int u = rng.uniform_int(0, 3); u > 0; --u) target.tokens.push_back(rng.uniform_int(1, v));
    const double want = enumerate_ctc(lp, target.tokens);
    const double got = ctc_neg_log_likelihood(lp, target);
    if (std::isinf(want)) {
      EXPECT_EQ(got, kInf);
    } else {
      EXPECT_NEAR(got, want, 1e-6);
      EXPECT_GE(got, -1e-9);
    }
  }
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  int instances = 0;
  while (instances < 20) {
    const int v = rng.uniform_int(2, 4);
    LabelSequence target;
    for (int u = rng.uniform_int(1, 3); u > 0; --u) target.tokens.push_back(rng.uniform_int(1, v));
    const int t = rng.uniform_int(1, 5);
    if (t < ctc_min_frames(target)) continue;
    ++instances;
    // Perturb log_probs directly: the DP is defined for any score matrix.
    Parameter lp{"lp", random_log_probs(t, v + 1, rng), {}};
    Parameter* ps[] = {&lp};
    const GradCheckResult r = gradient_check(ps, [&](Graph& g) { return ctc_loss(g.param(lp), target); });
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(Ctc, GradientIsZeroWhenInfeasible) {
  Tensor grad;
  const Tensor lp = log_of(1, 3, {0.2, 0.4, 0.4});
  EXPECT_EQ(ctc_neg_log_likelihood(lp, LabelSequence{{1, 2}}, &grad), kInf);
  EXPECT_EQ(grad, Tensor({1, 3}, 0.0));
}

TEST(CtcBatch, Examples) {
  Rng rng(3);
  Graph g;
  const Tensor a = random_log_probs(4, 3, rng);
  const Tensor b = random_log_probs(3, 3, rng);
  const LabelSequence ta{{1, 2}}, tb{{2}};
  const double la = ctc_neg_log_likelihood(a, ta), lb = ctc_neg_log_likelihood(b, tb);

  const CtcInstance one[] = {{g.constant(a), ta}};
  EXPECT_NEAR(ctc_batch_loss(one).loss.value().item(), la, 1e-12);

  const CtcInstance two[] = {{g.constant(a), ta}, {g.constant(b), tb}};
  EXPECT_NEAR(ctc_batch_loss(two).loss.value().item(), (la + lb) / 2, 1e-12);

  const CtcInstance mixed[] = {{g.constant(a), ta}, {g.constant(b), LabelSequence{{1, 1, 1}}}};
  const BatchLoss m = ctc_batch_loss(mixed);
  EXPECT_NEAR(m.loss.value().item(), la, 1e-12);
  EXPECT_EQ(m.skipped, 1);
  EXPECT_EQ(m.feasible, 1);

  const CtcInstance none[] = {{g.constant(b), LabelSequence{{1, 1, 1}}}};
  EXPECT_THROW(ctc_batch_loss(none), RuntimeFailure);
}

TEST(CtcBatch, PermutationInvariant) {
  Rng rng(4);
  Graph g;
  std::vector<CtcInstance> batch;
  for (int i = 0; i < 6; ++i) {
    batch.push_back({g.constant(random_log_probs(rng.uniform_int(3, 6), 4, rng)),
                     LabelSequence{{rng.uniform_int(1, 3), rng.uniform_int(1, 3)}}});
  }
  const double base = ctc_batch_loss(batch).loss.value().item();
  for (int trial = 0; trial < 10; ++trial) {
    for (int i = 5; i > 0; --i) std::swap(batch[i], batch[rng.uniform_int(0, i)]);
    EXPECT_NEAR(ctc_batch_loss(batch).loss.value().item(), base, 1e-12);
  }
}

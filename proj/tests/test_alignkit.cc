#include <gtest/gtest.h>

#include <algorithm>
#include <climits>

#include "arf/alignkit.h"

using namespace arf;

namespace {

const Vocab kV4{4};

Alignment A(std::vector<int> t) { return Alignment{std::move(t)}; }
LabelSequence L(std::vector<int> t) { return LabelSequence{std::move(t)}; }

// Exhaustive edit-script oracle: tries every operation at every point.
int brute_distance(const std::vector<int>& a, std::size_t i, const std::vector<int>& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  int best = INT_MAX;
  best = std::min(best, (a[i] == b[j] ? 0 : 1) + brute_distance(a, i + 1, b, j + 1));
  best = std::min(best, 1 + brute_distance(a, i + 1, b, j));
  best = std::min(best, 1 + brute_distance(a, i, b, j + 1));
  return best;
}

// Inverse of collapse: repeat each label k >= 1 times, sprinkle blanks, and
// force a blank between equal neighbours.
Alignment expand(const LabelSequence& s, Rng& rng) {
  Alignment a;
  for (int i = 0; i < s.size(); ++i) {
    const int blanks = rng.uniform_int(0, 2) + (i > 0 && s.tokens[i] == s.tokens[i - 1] ? 1 : 0);
    for (int k = 0; k < blanks; ++k) a.tokens.push_back(0);
    const int reps = rng.uniform_int(1, 3);
    for (int k = 0; k < reps; ++k) a.tokens.push_back(s.tokens[i]);
  }
  for (int k = rng.uniform_int(0, 2); k > 0; --k) a.tokens.push_back(0);
  return a;
}

}  // namespace

TEST(Vocab, Layout) {
  EXPECT_EQ(Vocab::kBlank, 0);
  EXPECT_EQ(kV4.mask_id(), 5);
  EXPECT_EQ(kV4.output_dim(), 5);
  EXPECT_EQ(kV4.embed_rows(), 6);
  EXPECT_FALSE(kV4.is_label(0));
  EXPECT_FALSE(kV4.is_label(5));
}

TEST(Collapse, Examples) {
  EXPECT_EQ(collapse(A({0, 0, 0}), kV4), L({}));
  EXPECT_EQ(collapse(A({1, 1, 0, 2, 0, 2}), kV4), L({1, 2, 2}));
  EXPECT_EQ(collapse(A({1, 0, 1}), kV4), L({1, 1}));
  EXPECT_THROW(collapse(A({1, 5}), kV4), ContractViolation);
}

TEST(Collapse, SurvivesReExpansion) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    Alignment x;
    const int n = rng.uniform_int(0, 12);
    for (int i = 0; i < n; ++i) x.tokens.push_back(rng.uniform_int(0, 4));
    const LabelSequence c = collapse(x, kV4);
    EXPECT_EQ(collapse(expand(c, rng), kV4), c);
  }
}

TEST(Greedy, OneHotRows) {
  Tensor s({3, 5}, 0.0);
  s.at(0, 2) = 1;
  s.at(1, 0) = 1;
  s.at(2, 3) = 1;
  EXPECT_EQ(greedy_alignment(s), A({2, 0, 3}));
}

TEST(Greedy, TiesGoToBlank) {
  EXPECT_EQ(greedy_alignment(Tensor({2, 5}, 0.25)), A({0, 0}));
}

TEST(Greedy, MatchesLinearScan) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = rng.uniform_int(1, 10);
    Tensor s({rows, 5});
    // Coarse values so ties actually happen.
    for (double& v : s.values()) v = rng.uniform_int(0, 3);
    const Alignment a = greedy_alignment(s);
    ASSERT_EQ(a.size(), rows);
    for (int r = 0; r < rows; ++r) {
      int best = 0;
      for (int c = 1; c < 5; ++c)
        if (s.at(r, c) > s.at(r, best)) best = c;
      EXPECT_EQ(a.tokens[r], best);
    }
  }
}

TEST(MaskAugment, Extremes) {
  Rng rng(3);
  const Alignment a = A({1, 0, 2, 3, 0, 4});
  for (int seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    EXPECT_EQ(mask_augment(a, 0.0, kV4, r), a);
  }
  EXPECT_EQ(mask_augment(a, 1.0, kV4, rng), A(std::vector<int>(6, kV4.mask_id())));
}

TEST(MaskAugment, LightMaskingRate) {
  Rng rng(4);
  const Alignment a = A(std::vector<int>(10000, 1));
  const Alignment m = mask_augment(a, 0.02, kV4, rng);
  const long masked = std::count(m.tokens.begin(), m.tokens.end(), kV4.mask_id());
  EXPECT_GE(masked, 120);
  EXPECT_LE(masked, 280);
}

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(L({1, 2, 3}), L({1, 2, 3})), (EditCounts{0, 0, 0}));
  EXPECT_EQ(edit_distance(L({1, 2, 3}), L({1, 3})), (EditCounts{0, 0, 1}));
  const EditCounts c = edit_distance(L({1, 2, 3, 4}), L({1, 7, 3, 4, 5}));
  EXPECT_EQ(c, (EditCounts{1, 1, 0}));
  EXPECT_DOUBLE_EQ(error_rate(c, 4), 50.0);
}

TEST(EditDistance, EmptyReference) {
  const EditCounts c = edit_distance(L({}), L({3, 4}));
  EXPECT_EQ(c, (EditCounts{0, 2, 0}));
  EXPECT_DOUBLE_EQ(error_rate(c, 0), 200.0);
}

TEST(EditDistance, MatchesBruteForceAndIsSymmetric) {
  Rng rng(5);
  for (int trial = 0; trial < 400; ++trial) {
    LabelSequence a, b;
    for (int i = rng.uniform_int(0, 6); i > 0; --i) a.tokens.push_back(rng.uniform_int(1, 3));
    for (int i = rng.uniform_int(0, 6); i > 0; --i) b.tokens.push_back(rng.uniform_int(1, 3));
    const EditCounts ab = edit_distance(a, b);
    EXPECT_EQ(ab.total(), brute_distance(a.tokens, 0, b.tokens, 0));
    EXPECT_EQ(ab.total(), edit_distance(b, a).total());
    // The script accounts for every token of both sides.
    int ref_seen = 0, hyp_seen = 0;
    for (const EditStep& s : edit_script(a, b)) {
      ref_seen += s.ref >= 0;
      hyp_seen += s.hyp >= 0;
    }
    EXPECT_EQ(ref_seen, a.size());
    EXPECT_EQ(hyp_seen, b.size());
  }
}

TEST(Text, RoundTrip) {
  const Alignment a = A({1, 0, 5, 4, 0});
  EXPECT_EQ(to_text(a, kV4), "1 _ ? 4 _");
  EXPECT_EQ(parse_alignment(to_text(a, kV4), kV4), a);
  EXPECT_EQ(to_text(L({3, 1})), "3 1");
  EXPECT_EQ(parse_labels("3 1"), L({3, 1}));
  EXPECT_THROW(parse_alignment("1 9", kV4), ContractViolation);
  EXPECT_THROW(parse_labels("0"), ContractViolation);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "arf/synthdata.h"

using namespace arf;

namespace {

TaskSpec built(TaskSpec s = TaskSpec::make_default()) {
  s.build();
  return s;
}

}  // namespace

TEST(Task, BigramRowsAreDistributions) {
  const TaskSpec s = built();
  ASSERT_EQ(static_cast<int>(s.bigram.size()), s.num_labels + 1);
  for (const auto& row : s.bigram) {
    double total = 0;
    for (double p : row) {
      EXPECT_GE(p, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_EQ(row[0], 0.0);
  }
}

TEST(Task, PairMembersAreClose) {
  const TaskSpec s = built();
  auto dist = [&](int a, int b) {
    double d = 0;
    for (int f = 0; f < s.feature_dim; ++f) d += std::pow(s.prototypes[a][f] - s.prototypes[b][f], 2);
    return std::sqrt(d);
  };
  for (int p = 0; p < s.num_pairs(); ++p) {
    EXPECT_NEAR(dist(2 * p + 1, 2 * p + 2), 2 * s.confusion, 1e-9);
    EXPECT_EQ(TaskSpec::pair_of(2 * p + 1), p);
    EXPECT_EQ(TaskSpec::pair_of(2 * p + 2), p);
  }
}

TEST(Task, RejectsBadParameters) {
  TaskSpec s = TaskSpec::make_default();
  s.num_labels = 7;
  EXPECT_THROW(s.build(), ValidationError);
  s = TaskSpec::make_default();
  s.grammar_leak = 1.0;
  EXPECT_THROW(s.build(), ValidationError);
  s = TaskSpec::make_default();
  s.min_duration = 0;
  EXPECT_THROW(s.build(), ValidationError);
}

TEST(Task, JsonRoundTrip) {
  TaskSpec s = TaskSpec::make_default();
  s.noise = 0.125;
  s.task_seed = 99;
  s.build();
  const TaskSpec back = built(TaskSpec::from_json(s.to_json()));
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.bigram, built(s).bigram);
}

TEST(Generate, Deterministic) {
  const TaskSpec s = built();
  for (int i = 0; i < 10; ++i) {
    const Utterance a = generate_utterance(s, Split::kDev, i, 7);
    const Utterance b = generate_utterance(s, Split::kDev, i, 7);
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.target, b.target);
    EXPECT_EQ(a.features, b.features);
  }
  EXPECT_NE(generate_utterance(s, Split::kDev, 0, 7).features, generate_utterance(s, Split::kTest, 0, 7).features);
  EXPECT_NE(generate_utterance(s, Split::kDev, 0, 7).features, generate_utterance(s, Split::kDev, 0, 8).features);
}

TEST(Generate, NoiselessFramesAreExactPrototypes) {
  TaskSpec s = TaskSpec::make_default();
  s.noise = 0.0;
  s.build();
  auto merge = [](const std::vector<int>& seq) {
    std::vector<int> out;
    for (int x : seq)
      if (out.empty() || out.back() != x) out.push_back(x);
    return out;
  };
  for (int i = 0; i < 20; ++i) {
    const Utterance u = generate_utterance(s, Split::kTrain, i, 3);
    std::vector<int> frame_labels;
    for (int t = 0; t < u.features.rows(); ++t) {
      int match = -1;
      for (int label = 1; label <= s.num_labels; ++label) {
        bool same = true;
        for (int f = 0; f < s.feature_dim; ++f) same = same && u.features.at(t, f) == s.prototypes[label][f];
        if (same) match = label;
      }
      ASSERT_GE(match, 1) << u.id << " frame " << t;
      frame_labels.push_back(match);
    }
    EXPECT_EQ(merge(frame_labels), merge(u.target.tokens)) << u.id;
  }
}

TEST(Generate, LengthsInRange) {
  const TaskSpec s = built();
  const auto corpus = generate_corpus(s, Split::kTrain, 300, 5);
  for (const Utterance& u : corpus) {
    const int n = u.target.size();
    EXPECT_GE(n, s.min_length);
    EXPECT_LE(n, s.max_length);
    EXPECT_GE(u.features.rows(), s.min_duration * n);
    EXPECT_LE(u.features.rows(), s.max_duration * n);
    EXPECT_EQ(u.features.cols(), s.feature_dim);
    for (int tok : u.target.tokens) EXPECT_TRUE(tok >= 1 && tok <= s.num_labels);
  }
}

TEST(Generate, BigramFrequenciesMatchGrammar) {
  const TaskSpec s = built();
  const int v = s.num_labels;
  std::vector<std::vector<long>> counts(v + 1, std::vector<long>(v + 1, 0));
  for (int i = 0; i < 10000; ++i) {
    const Utterance u = generate_utterance(s, Split::kTrain, i, 11);
    int prev = 0;
    for (int tok : u.target.tokens) {
      ++counts[prev][tok];
      prev = tok;
    }
  }
  for (int prev = 0; prev <= v; ++prev) {
    long n = 0;
    for (long c : counts[prev]) n += c;
    ASSERT_GT(n, 0);
    // Pearson chi-square over the row; 272 separate 3-sigma checks would
    // fail by chance about once per run.
    double chi2 = 0;
    int cells = 0;
    for (int next = 1; next <= v; ++next) {
      const double expected = s.bigram[prev][next] * n;
      if (expected == 0.0) {
        EXPECT_EQ(counts[prev][next], 0) << prev << " -> " << next;
        continue;
      }
      chi2 += std::pow(counts[prev][next] - expected, 2) / expected;
      ++cells;
    }
    // 0.999 quantile of chi-square with 15 degrees of freedom.
    ASSERT_LE(cells, 16);
    EXPECT_LT(chi2, 37.70) << "row " << prev;
  }
}

TEST(CorpusHash, EmptyAndOrderSensitive) {
  EXPECT_EQ(corpus_hash({}), kEmptyCorpusHash);
  const TaskSpec s = built();
  auto corpus = generate_corpus(s, Split::kDev, 5, 1);
  const std::uint64_t h = corpus_hash(corpus);
  EXPECT_EQ(h, corpus_hash(generate_corpus(s, Split::kDev, 5, 1)));
  std::swap(corpus[0], corpus[1]);
  EXPECT_NE(corpus_hash(corpus), h);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(CorpusFile, RoundTrip) {
  const TaskSpec s = built();
  const auto corpus = generate_corpus(s, Split::kTest, 12, 4);
  std::stringstream ss;
  write_corpus(ss, s, corpus);
  TaskSpec back;
  std::vector<Utterance> read;
  read_corpus(ss, back, read);
  ASSERT_EQ(read.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(read[i].id, corpus[i].id);
    EXPECT_EQ(read[i].target, corpus[i].target);
    EXPECT_EQ(read[i].features, corpus[i].features);
  }
  EXPECT_EQ(corpus_hash(read), corpus_hash(corpus));
  EXPECT_EQ(back.to_json(), s.to_json());
}

TEST(Base64, KnownVectorsAndRoundTrip) {
  auto bytes = [](const std::string& s) { return std::vector<unsigned char>(s.begin(), s.end()); };
  EXPECT_EQ(base64_encode(bytes("")), "");
  EXPECT_EQ(base64_encode(bytes("f")), "Zg==");
  EXPECT_EQ(base64_encode(bytes("fo")), "Zm8=");
  EXPECT_EQ(base64_encode(bytes("foo")), "Zm9v");
  EXPECT_EQ(base64_encode(bytes("foobar")), "Zm9vYmFy");
  std::vector<unsigned char> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<unsigned char>(i);
  EXPECT_EQ(base64_decode(base64_encode(all)), all);
  EXPECT_THROW(base64_decode("Zm9*"), ValidationError);
}

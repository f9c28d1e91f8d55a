#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "arf/gradcheck.h"
#include "arf/rnnt.h"

using namespace arf;

namespace {

FirstPassConfig tiny() {
  FirstPassConfig c;
  c.num_labels = 4;
  c.input_dim = 3;
  c.model_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ff_hidden = 12;
  c.joint_dim = 6;
  c.max_emit_per_frame = 3;
  return c;
}

Tensor random_features(int frames, int dim, Rng& rng) {
  Tensor t({frames, dim});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

Tensor random_lattice(int rows, int classes, Rng& rng) {
  Tensor t({rows, classes});
  for (double& v : t.values()) v = 1.5 * rng.normal();
  return kernels::log_softmax_rows(t);
}

// Sum over all monotone paths: from (t, u) either blank to (t+1, u) or the
// next label to (t, u+1); the final blank leaves (T'-1, U).
long double paths(const Tensor& lat, int frames, const std::vector<int>& y, int t, int u) {
  const int u1 = static_cast<int>(y.size()) + 1;
  const int row = t * u1 + u;
  long double total = 0;
  if (u < static_cast<int>(y.size())) total += std::exp((long double)lat.at(row, y[u])) * paths(lat, frames, y, t, u + 1);
  if (t + 1 < frames) {
    total += std::exp((long double)lat.at(row, 0)) * paths(lat, frames, y, t + 1, u);
  } else if (u == static_cast<int>(y.size())) {
    total += std::exp((long double)lat.at(row, 0));
  }
  return total;
}

double enumerate_rnnt(const Tensor& lat, int frames, const LabelSequence& y) {
  return -std::log(static_cast<double>(paths(lat, frames, y.tokens, 0, 0)));
}

// Greedy transducer search written from scratch.
Alignment greedy(const FirstPassModel& m, const Tensor& enc, int max_emit) {
  const Tensor proj = m.project_encoder(enc);
  PredState s = m.initial_state();
  Alignment a;
  for (int t = 0; t < enc.rows(); ++t) {
    int emitted = 0;
    while (true) {
      const auto lp = m.joint_log_probs(proj.row(t), s);
      int best = 0;
      for (int k = 1; k < static_cast<int>(lp.size()) && emitted < max_emit; ++k)
        if (lp[k] > lp[best]) best = k;
      a.tokens.push_back(best);
      if (best == 0) break;
      s = m.advance(s, best);
      ++emitted;
    }
  }
  return a;
}

// Joint table indexed by (frame, labels emitted so far).
class TableScorer : public JointScorer {
 public:
  explicit TableScorer(std::vector<std::vector<std::vector<double>>> p) : p_(std::move(p)) {}
  int frames() const override { return static_cast<int>(p_.size()); }
  int classes() const override { return static_cast<int>(p_[0][0].size()); }
  PredState initial() const override { return PredState{Tensor::scalar(0), Tensor::scalar(0)}; }
  PredState advance(const PredState& s, int) const override {
    return PredState{Tensor::scalar(s.output.item() + 1), Tensor::scalar(0)};
  }
  std::vector<double> log_probs(int t, const PredState& s) const override {
    const auto& rows = p_[t];
    const int u = std::min(static_cast<int>(s.output.item()), static_cast<int>(rows.size()) - 1);
    std::vector<double> out;
    for (double q : rows[u]) out.push_back(std::log(q));
    return out;
  }

 private:
  std::vector<std::vector<std::vector<double>>> p_;
};

}  // namespace

TEST(RnntLoss, SingleFrameSingleLabel) {
  // Rows: (t0, u0), (t0, u1).
  Tensor lat = Tensor::matrix(2, 3, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  for (double& v : lat.values()) v = std::log(v);
  const double expected = -(std::log(0.5) + std::log(0.6));
  EXPECT_NEAR(rnnt_neg_log_likelihood(lat, 1, LabelSequence{{1}}), expected, 1e-12);
  EXPECT_NEAR(rnnt_loss_oracle(lat, 1, LabelSequence{{1}}), expected, 1e-12);
}

TEST(RnntLoss, EmptyTargetIsAllBlank) {
  Tensor lat = Tensor::matrix(2, 2, {0.7, 0.3, 0.4, 0.6});
  for (double& v : lat.values()) v = std::log(v);
  const double expected = -(std::log(0.7) + std::log(0.4));
  EXPECT_NEAR(rnnt_neg_log_likelihood(lat, 2, LabelSequence{}), expected, 1e-12);
}

TEST(RnntLoss, MatchesPathEnumeration) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const int v = rng.uniform_int(1, 3);
    const int frames = rng.uniform_int(1, 4);
    LabelSequence y;
    for (int u = rng.uniform_int(0, 3); u > 0; --u) y.tokens.push_back(rng.uniform_int(1, v));
    const Tensor lat = random_lattice(frames * (y.size() + 1), v + 1, rng);
    const double want = enumerate_rnnt(lat, frames, y);
    EXPECT_NEAR(rnnt_neg_log_likelihood(lat, frames, y), want, 1e-6);
    EXPECT_NEAR(rnnt_loss_oracle(lat, frames, y), want, 1e-6);
  }
}

TEST(RnntLoss, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const int v = rng.uniform_int(1, 3);
    const int frames = rng.uniform_int(1, 4);
    LabelSequence y;
    for (int u = rng.uniform_int(0, 3); u > 0; --u) y.tokens.push_back(rng.uniform_int(1, v));
    Parameter lat{"lattice", random_lattice(frames * (y.size() + 1), v + 1, rng), {}};
    Parameter* ps[] = {&lat};
    const GradCheckResult r = gradient_check(ps, [&](Graph& g) { return rnnt_loss(g.param(lat), frames, y); });
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(RnntModel, GradientThroughWholeModel) {
  Rng rng(3);
  for (int i = 0; i < 3; ++i) {
    FirstPassModel m(tiny(), 10 + i);
    const Tensor x = random_features(rng.uniform_int(2, 5), 3, rng);
    LabelSequence y{{rng.uniform_int(1, 4), rng.uniform_int(1, 4)}};
    std::vector<Parameter*> ps = m.params().all();
    Rng sample(i);
    const GradCheckResult r = gradient_check(
        ps, [&](Graph& g) { return m.loss(g, m.encode(g, g.constant(x)), y); }, 1e-5, 3, &sample);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(RnntModel, EncoderIsCausal) {
  Rng rng(4);
  FirstPassModel m(tiny(), 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int frames = rng.uniform_int(2, 9);
    Tensor x = random_features(frames, 3, rng);
    const Tensor base = m.encode_causal(x);
    const int t = rng.uniform_int(0, frames - 2);
    for (int f = 0; f < 3; ++f) x.at(t + 1, f) += 10.0;
    const Tensor moved = m.encode_causal(x);
    for (int r = 0; r <= t; ++r)
      for (int c = 0; c < base.cols(); ++c) ASSERT_EQ(base.at(r, c), moved.at(r, c));
  }
  const Tensor one = m.encode_causal(random_features(1, 3, rng));
  EXPECT_EQ(one.rows(), 1);
}

TEST(RnntModel, JacobianIsLowerTriangularInTime) {
  Rng rng(5);
  FirstPassModel m(tiny(), 2);
  const Tensor x = random_features(6, 3, rng);
  const double h = 1e-5;
  for (int tin = 0; tin < 6; ++tin) {
    for (int f = 0; f < 3; ++f) {
      Tensor up = x, down = x;
      up.at(tin, f) += h;
      down.at(tin, f) -= h;
      const Tensor a = m.encode_causal(up), b = m.encode_causal(down);
      for (int tout = 0; tout < 6; ++tout) {
        double mag = 0;
        for (int c = 0; c < a.cols(); ++c) mag = std::max(mag, std::abs(a.at(tout, c) - b.at(tout, c)) / (2 * h));
        if (tin > tout) {
          EXPECT_EQ(mag, 0.0) << "out " << tout << " in " << tin;
        } else if (tin == tout) {
          EXPECT_GT(mag, 0.0);
        }
      }
    }
  }
}

TEST(RnntModel, IncrementalPredictionMatchesLattice) {
  Rng rng(6);
  FirstPassModel m(tiny(), 3);
  const Tensor enc = m.encode_causal(random_features(4, 3, rng));
  const LabelSequence y{{2, 4, 1}};
  Graph g(false);
  const Tensor lat = m.lattice_log_probs(g, g.constant(enc), m.predict(g, y)).value();
  const Tensor proj = m.project_encoder(enc);
  PredState s = m.initial_state();
  for (int u = 0; u <= y.size(); ++u) {
    for (int t = 0; t < 4; ++t) {
      const auto lp = m.joint_log_probs(proj.row(t), s);
      for (int k = 0; k < 5; ++k) EXPECT_NEAR(lp[k], lat.at(t * 4 + u, k), 1e-12);
    }
    if (u < y.size()) s = m.advance(s, y.tokens[u]);
  }
}

TEST(Decode, BeamOneEqualsGreedy) {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    FirstPassModel m(tiny(), 100 + i);
    const Tensor enc = m.encode_causal(random_features(rng.uniform_int(1, 8), 3, rng));
    const auto hyps = decode(m, enc, DecodeOptions{1, 3});
    ASSERT_EQ(hyps.size(), 1u);
    EXPECT_EQ(hyps[0].alignment, greedy(m, enc, 3));
  }
}

TEST(Decode, BeamFindsDelayedEmission) {
  // V = 2. Greedy emits label 1 at frame 0 (0.6) and then only blanks:
  // p = 0.6 * 0.5 * 0.5 = 0.15. Waiting a frame scores 0.4 * 0.9 * 0.5 = 0.18.
  TableScorer table({
      {{0.4, 0.6, 0.0}, {0.5, 0.25, 0.25}, {1.0, 0.0, 0.0}},
      {{0.1, 0.9, 0.0}, {0.5, 0.25, 0.25}, {1.0, 0.0, 0.0}},
  });
  const auto g = beam_search(table, DecodeOptions{1, 4});
  EXPECT_EQ(g[0].alignment, (Alignment{{1, 0, 0}}));
  EXPECT_NEAR(std::exp(g[0].log_score), 0.15, 1e-12);
  const auto b = beam_search(table, DecodeOptions{2, 4});
  EXPECT_EQ(b[0].alignment, (Alignment{{0, 1, 0}}));
  EXPECT_EQ(b[0].labels, (LabelSequence{{1}}));
  EXPECT_NEAR(std::exp(b[0].log_score), 0.18, 1e-12);
}

TEST(Decode, AlignmentsHoldOneBlankPerFrame) {
  Rng rng(8);
  const Vocab vocab{4};
  for (int i = 0; i < 30; ++i) {
    FirstPassModel m(tiny(), 200 + i);
    const int frames = rng.uniform_int(1, 8);
    const Tensor enc = m.encode_causal(random_features(frames, 3, rng));
    for (int beam : {1, 2, 4}) {
      const auto hyps = decode(m, enc, DecodeOptions{beam, 3});
      EXPECT_LE(static_cast<int>(hyps.size()), beam);
      for (std::size_t h = 0; h + 1 < hyps.size(); ++h) EXPECT_GE(hyps[h].log_score, hyps[h + 1].log_score);
      for (const auto& h : hyps) {
        LabelSequence labels;
        int blanks = 0;
        bool adjacent_repeat = false;
        for (std::size_t k = 0; k < h.alignment.tokens.size(); ++k) {
          const int tok = h.alignment.tokens[k];
          if (tok == 0) ++blanks;
          else labels.tokens.push_back(tok);
          if (k > 0 && tok != 0 && tok == h.alignment.tokens[k - 1]) adjacent_repeat = true;
        }
        EXPECT_EQ(blanks, frames);
        EXPECT_EQ(labels, h.labels);
        EXPECT_EQ(h.alignment.size(), frames + h.labels.size());
        // Without back-to-back repeats the CTC collapse agrees as well.
        if (!adjacent_repeat) EXPECT_EQ(collapse(h.alignment, vocab), h.labels);
      }
    }
  }
}

TEST(SpecAugment, NoMasksIsIdentity) {
  Rng rng(9);
  const Tensor x = random_features(10, 4, rng);
  EXPECT_EQ(spec_augment(x, rng, SpecAugmentOptions{0, 0.1, 0, 0.25}), x);
}

TEST(SpecAugment, TimeMaskWidthBound) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const int frames = rng.uniform_int(1, 40);
    Tensor x({frames, 3}, 1.0);
    const Tensor y = spec_augment(x, rng, SpecAugmentOptions{1, 0.1, 0, 0.0});
    int zeroed = 0;
    for (int t = 0; t < frames; ++t) zeroed += y.at(t, 0) == 0.0;
    EXPECT_LE(zeroed, static_cast<int>(std::ceil(0.1 * frames)));
  }
}

TEST(SpecAugment, Deterministic) {
  Rng a(11), b(11), data(12);
  const Tensor x = random_features(20, 8, data);
  EXPECT_EQ(spec_augment(x, a), spec_augment(x, b));
}

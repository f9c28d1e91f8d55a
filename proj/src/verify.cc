#include "arf/verify.h"

#include <chrono>
#include <cmath>
#include <sstream>

#include "arf/check.h"
#include "arf/ctc.h"
#include "arf/gradcheck.h"
#include "arf/refiner.h"
#include "arf/rnnt.h"

namespace arf {

namespace {

Tensor random_log_probs(int rows, int classes, Rng& rng, double scale = 2.0) {
  Tensor t({rows, classes});
  for (double& v : t.values()) v = scale * rng.normal();
  return kernels::log_softmax_rows(t);
}

LabelSequence random_labels(int max_len, int num_labels, Rng& rng) {
  LabelSequence s;
  const int n = rng.uniform_int(0, max_len);
  for (int i = 0; i < n; ++i) s.tokens.push_back(rng.uniform_int(1, num_labels));
  return s;
}

// Both infinite counts as agreement: the target is unreachable either way.
bool close(double a, double b, double tol) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::abs(a - b) < tol;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

FirstPassConfig tiny_first_pass() {
  FirstPassConfig c;
  c.num_labels = 4;
  c.input_dim = 3;
  c.model_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ff_hidden = 8;
  c.joint_dim = 6;
  c.max_emit_per_frame = 2;
  return c;
}

RefineConfig tiny_refiner(int cascade_layers) {
  RefineConfig c;
  c.num_labels = 4;
  c.audio_dim = 8;
  c.model_dim = 8;
  c.layers = 1;
  c.cascade_layers = cascade_layers;
  c.heads = 2;
  c.ff_hidden = 8;
  return c;
}

Tensor random_features(int frames, int dim, Rng& rng) {
  Tensor t({frames, dim});
  for (double& v : t.values()) v = rng.normal();
  return t;
}

// Reference greedy transducer search written without beams.
Alignment plain_greedy(const FirstPassModel& m, const Tensor& enc, int max_emit) {
  const Tensor proj = m.project_encoder(enc);
  PredState state = m.initial_state();
  Alignment a;
  for (int t = 0; t < enc.rows(); ++t) {
    for (int emitted = 0;; ++emitted) {
      const std::vector<double> lp = m.joint_log_probs(proj.row(t), state);
      int best = 0;
      const int last = emitted < max_emit ? static_cast<int>(lp.size()) : 1;
      for (int k = 1; k < last; ++k) {
        if (lp[k] > lp[best]) best = k;
      }
      a.tokens.push_back(best);
      if (best == Vocab::kBlank) break;
      state = m.advance(state, best);
    }
  }
  return a;
}

}  // namespace

bool SuiteResult::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return !checks.empty();
}

SuiteResult verify_ctc_oracle(std::uint64_t seed, int instances, double tol) {
  Timer timer;
  Rng rng = Rng(seed).split("ctc-oracle");
  int matched = 0;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int v = rng.uniform_int(1, 4);
    const int t = rng.uniform_int(1, 6);
    const Tensor lp = random_log_probs(t, v + 1, rng);
    const LabelSequence target = random_labels(3, v, rng);
    const double a = ctc_neg_log_likelihood(lp, target);
    const double b = ctc_loss_oracle(lp, target);
    if (close(a, b, tol)) ++matched;
    if (std::isfinite(a) && std::isfinite(b)) worst = std::max(worst, std::abs(a - b));
  }
  SuiteResult r{"ctc-oracle", {}, 0.0};
  r.checks.push_back({"ctc vs enumeration", matched == instances,
                      std::to_string(matched) + "/" + std::to_string(instances) + " matched < " + fmt(tol) +
                          " (max diff " + fmt(worst) + ")"});
  r.seconds = timer.seconds();
  r.checks.push_back({"runtime < 30 s", r.seconds < 30.0, fmt(r.seconds) + " s"});
  return r;
}

SuiteResult verify_rnnt_oracle(std::uint64_t seed, int instances, double tol) {
  Timer timer;
  Rng rng = Rng(seed).split("rnnt-oracle");
  int matched = 0;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const int v = rng.uniform_int(1, 3);
    const int frames = rng.uniform_int(1, 4);
    const LabelSequence target = random_labels(3, v, rng);
    const int u1 = static_cast<int>(target.size()) + 1;
    const Tensor lattice = random_log_probs(frames * u1, v + 1, rng);
    const double a = rnnt_neg_log_likelihood(lattice, frames, target);
    const double b = rnnt_loss_oracle(lattice, frames, target);
    if (close(a, b, tol)) ++matched;
    worst = std::max(worst, std::abs(a - b));
  }
  SuiteResult r{"rnnt-oracle", {}, 0.0};
  r.checks.push_back({"rnnt vs path enumeration", matched == instances,
                      std::to_string(matched) + "/" + std::to_string(instances) + " matched < " + fmt(tol) +
                          " (max diff " + fmt(worst) + ")"});
  r.seconds = timer.seconds();
  return r;
}

SuiteResult verify_gradients(std::uint64_t seed, int instances) {
  Timer timer;
  SuiteResult r{"gradients", {}, 0.0};
  Rng rng = Rng(seed).split("gradients");

  auto run = [&](const std::string& name, double tol, const std::function<GradCheckResult(int)>& one) {
    double worst = 0.0;
    int checked = 0;
    std::string where;
    for (int i = 0; i < instances; ++i) {
      const GradCheckResult g = one(i);
      checked += g.checked;
      if (g.max_rel_error >= worst) {
        worst = g.max_rel_error;
        where = g.worst;
      }
    }
    r.checks.push_back({name, worst < tol,
                        std::to_string(instances) + " instances, " + std::to_string(checked) +
                            " entries, max rel err " + fmt(worst) + " (" + where + ") < " + fmt(tol)});
  };

  run("ctc_loss", 1e-4, [&](int) {
    const int v = rng.uniform_int(2, 4);
    LabelSequence target = random_labels(3, v, rng);
    const int t = ctc_min_frames(target) + rng.uniform_int(0, 3);
    Parameter logits{"logits", Tensor({std::max(t, 1), v + 1}), {}};
    for (double& x : logits.value.values()) x = rng.normal();
    Parameter* ps[] = {&logits};
    return gradient_check(ps, [&](Graph& g) { return ctc_loss(log_softmax_rows(g.param(logits)), target); });
  });

  run("rnnt_loss", 1e-4, [&](int) {
    const int v = rng.uniform_int(2, 3);
    LabelSequence target = random_labels(3, v, rng);
    const int frames = rng.uniform_int(1, 4);
    const int u1 = static_cast<int>(target.size()) + 1;
    Parameter logits{"logits", Tensor({frames * u1, v + 1}), {}};
    for (double& x : logits.value.values()) x = rng.normal();
    Parameter* ps[] = {&logits};
    return gradient_check(ps, [&](Graph& g) {
      return rnnt_loss(log_softmax_rows(g.param(logits)), frames, target);
    });
  });

  run("refine_train_loss", 1e-3, [&](int i) {
    RefineConfig rc = tiny_refiner(i % 2);
    rc.train_steps = 1 + i % 3;
    Refiner model(rc, hash_combine(seed, static_cast<std::uint64_t>(i)));
    LabelSequence target = random_labels(3, rc.num_labels, rng);
    if (target.tokens.empty()) target.tokens.push_back(1);
    const int frames = ctc_min_frames(target) + rng.uniform_int(0, 3);
    Alignment a0;
    for (int t = 0; t < frames; ++t) a0.tokens.push_back(rng.uniform_int(0, rc.num_labels));
    const Tensor audio = random_features(frames, rc.audio_dim, rng);
    const double p = (i % 4 == 3) ? 0.3 : 0.0;
    const std::uint64_t mask_seed = rng.next_u64();
    std::vector<Parameter*> params = model.params().all();
    Rng sample = rng.split(static_cast<std::uint64_t>(i));
    return gradient_check(
        params,
        [&](Graph& g) {
          Rng mask(mask_seed);
          Var enc = model.cascade_encode(g, g.constant(audio));
          return refine_train_loss(g, model, enc, a0, target, rc.train_steps, p, mask).loss;
        },
        1e-5, 3, &sample);
  });

  r.seconds = timer.seconds();
  return r;
}

SuiteResult verify_structure(std::uint64_t seed) {
  Timer timer;
  SuiteResult r{"structure", {}, 0.0};
  Rng rng = Rng(seed).split("structure");
  const FirstPassConfig fc = tiny_first_pass();

  {
    int ok = 0;
    for (int i = 0; i < 20; ++i) {
      FirstPassModel m(fc, hash_combine(seed, 100 + i));
      const int frames = rng.uniform_int(4, 12);
      Tensor x = random_features(frames, fc.input_dim, rng);
      const Tensor base = m.encode_causal(x);
      const int at = rng.uniform_int(0, frames - 1);
      for (int f = 0; f < fc.input_dim; ++f) x.at(at, f) += 1.0 + rng.normal();
      const Tensor moved = m.encode_causal(x);
      bool past_same = true;
      for (int t = 0; t < at; ++t)
        for (int c = 0; c < base.cols(); ++c) past_same &= base.at(t, c) == moved.at(t, c);
      bool here_changed = false;
      for (int c = 0; c < base.cols(); ++c) here_changed |= base.at(at, c) != moved.at(at, c);
      ok += past_same && here_changed;
    }
    r.checks.push_back({"first-pass encoder causality", ok == 20, std::to_string(ok) + "/20 inputs"});
  }

  {
    int ok = 0;
    for (int i = 0; i < 20; ++i) {
      RefineConfig rc = tiny_refiner(1 + i % 2);
      Refiner m(rc, hash_combine(seed, 200 + i));
      const int reach = rc.right_context * rc.cascade_layers;
      const int frames = rng.uniform_int(reach + 2, reach + 12);
      Tensor x = random_features(frames, rc.audio_dim, rng);
      const Tensor base = m.cascade_encode(x);
      const int at = rng.uniform_int(reach, frames - 1);
      for (int f = 0; f < rc.audio_dim; ++f) x.at(at, f) += 1.0 + rng.normal();
      const Tensor moved = m.cascade_encode(x);
      bool outside_same = true;
      for (int t = 0; t < at - reach; ++t)
        for (int c = 0; c < base.cols(); ++c) outside_same &= base.at(t, c) == moved.at(t, c);
      bool edge_changed = false;
      for (int c = 0; c < base.cols(); ++c) edge_changed |= base.at(at - reach, c) != moved.at(at - reach, c);
      ok += outside_same && edge_changed;
    }
    r.checks.push_back({"cascade encoder right context = 3 * L'", ok == 20, std::to_string(ok) + "/20 inputs"});
  }

  {
    int ok = 0;
    int blanks_ok = 0;
    int alignments = 0;
    for (int i = 0; i < 50; ++i) {
      FirstPassModel m(fc, hash_combine(seed, 300 + i));
      const int frames = rng.uniform_int(1, 10);
      const Tensor enc = m.encode_causal(random_features(frames, fc.input_dim, rng));
      const auto beam1 = decode(m, enc, DecodeOptions{1, fc.max_emit_per_frame});
      ok += beam1.front().alignment == plain_greedy(m, enc, fc.max_emit_per_frame);
      for (int beam : {1, 4}) {
        for (const DecodeHypothesis& h : decode(m, enc, DecodeOptions{beam, fc.max_emit_per_frame})) {
          // Transducer alignments drop blanks without merging repeats.
          int blanks = 0;
          LabelSequence emitted;
          for (int tok : h.alignment.tokens) {
            if (tok == Vocab::kBlank) ++blanks;
            else emitted.tokens.push_back(tok);
          }
          ++alignments;
          blanks_ok += blanks == frames && emitted == h.labels;
        }
      }
    }
    r.checks.push_back({"beam 1 equals greedy", ok == 50, std::to_string(ok) + "/50 cases"});
    r.checks.push_back({"T' blanks per alignment", blanks_ok == alignments,
                        std::to_string(blanks_ok) + "/" + std::to_string(alignments) + " alignments"});
  }

  r.seconds = timer.seconds();
  return r;
}

std::vector<std::string> suite_names() { return {"ctc-oracle", "rnnt-oracle", "gradients", "structure"}; }

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "ctc-oracle") return verify_ctc_oracle(seed);
  if (name == "rnnt-oracle") return verify_rnnt_oracle(seed);
  if (name == "gradients") return verify_gradients(seed);
  if (name == "structure") return verify_structure(seed);
  throw ValidationError("verify: unknown suite '" + name + "'");
}

}  // namespace arf

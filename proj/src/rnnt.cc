#include "arf/rnnt.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace arf {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

FirstPassModel::FirstPassModel(const FirstPassConfig& config, std::uint64_t seed)
    : config_(config), params_(std::make_unique<ParamStore>()) {
  ARF_CHECK(config.num_labels >= 1 && config.input_dim >= 1 && config.model_dim >= 1,
            "first-pass dimensions must be positive");
  ARF_CHECK(config.max_emit_per_frame >= 1, "max_emit_per_frame must be >= 1");
  Rng rng = Rng(seed).split("first");
  ParamStore& ps = *params_;
  const int d = config.model_dim;
  input_proj_ = Linear::create(ps, "first.enc.input", config.input_dim, d, rng);
  for (int i = 0; i < config.layers; ++i) {
    layers_.push_back(EncoderLayer::create(ps, "first.enc.layer" + std::to_string(i), d, config.heads,
                                           config.ff_hidden, rng));
  }
  final_norm_ = LayerNorm::create(ps, "first.enc.final_norm", d);
  Rng emb_rng = rng.split("first.pred.embed");
  pred_embed_ = &ps.create("first.pred.embed", init_normal(config.num_labels + 1, d, 1.0, emb_rng));
  pred_in_ = Linear::create(ps, "first.pred.in", d, d, rng);
  Rng rec_rng = rng.split("first.pred.rec");
  pred_rec_ = &ps.create("first.pred.rec", init_normal(d, d, 1.0 / std::sqrt(d), rec_rng));
  Rng je_rng = rng.split("first.joint.enc");
  joint_enc_ = &ps.create("first.joint.enc", init_normal(d, config.joint_dim, 1.0 / std::sqrt(d), je_rng));
  joint_pred_ = Linear::create(ps, "first.joint.pred", d, config.joint_dim, rng);
  joint_out_ = Linear::create(ps, "first.joint.out", config.joint_dim, config.num_labels + 1, rng);
}

Var FirstPassModel::encode(Graph& g, Var features) const {
  ARF_CHECK(features.rows() >= 1, "encode needs at least one frame");
  ARF_CHECK(features.cols() == config_.input_dim,
            "feature width " << features.cols() << " != " << config_.input_dim);
  Var x = input_proj_(g, features);
  x = add(x, g.constant(sinusoidal_positions(features.rows(), config_.model_dim)));
  const ForwardContext ctx;
  for (const EncoderLayer& layer : layers_) x = layer(g, x, /*right_context=*/0, ctx);
  return final_norm_(g, x);
}

Tensor FirstPassModel::encode_causal(const Tensor& features) const {
  Graph g(false);
  return encode(g, g.constant(features)).value();
}

Var FirstPassModel::predict(Graph& g, const LabelSequence& context) const {
  std::vector<int> ids;
  ids.reserve(context.size() + 1);
  ids.push_back(Vocab::kBlank);
  ids.insert(ids.end(), context.tokens.begin(), context.tokens.end());
  Var x = pred_in_(g, embedding(g.param(*pred_embed_), ids));
  Var rec = g.param(*pred_rec_);
  std::vector<Var> outputs;
  outputs.reserve(ids.size());
  Var h = tanh(slice_rows(x, 0, 1));
  outputs.push_back(h);
  for (int u = 1; u < static_cast<int>(ids.size()); ++u) {
    h = tanh(add(slice_rows(x, u, 1), matmul(h, rec)));
    outputs.push_back(h);
  }
  return concat_rows(outputs);
}

Var FirstPassModel::lattice_log_probs(Graph& g, Var enc, Var pred) const {
  Var ep = matmul(enc, g.param(*joint_enc_));
  Var pp = joint_pred_(g, pred);
  return log_softmax_rows(joint_out_(g, tanh(pair_add(ep, pp))));
}

Var FirstPassModel::loss(Graph& g, Var enc, const LabelSequence& target) const {
  Var lattice = lattice_log_probs(g, enc, predict(g, target));
  return rnnt_loss(lattice, enc.rows(), target);
}

Tensor FirstPassModel::project_encoder(const Tensor& enc) const {
  return kernels::matmul(enc, joint_enc_->value);
}

Tensor FirstPassModel::pred_step(const Tensor& prev_output, int label) const {
  const Tensor& table = pred_embed_->value;
  ARF_CHECK(label >= 0 && label < table.rows(), "prediction label " << label << " out of range");
  Tensor emb({1, table.cols()});
  auto src = table.row(label);
  std::copy(src.begin(), src.end(), emb.values().begin());
  Tensor x = kernels::matmul(emb, pred_in_.w->value);
  const Tensor r = kernels::matmul(prev_output, pred_rec_->value);
  for (int i = 0; i < x.cols(); ++i) x[i] = std::tanh((x[i] + pred_in_.b->value[i]) + r[i]);
  return x;
}

PredState FirstPassModel::initial_state() const {
  PredState s;
  s.output = pred_step(Tensor({1, config_.model_dim}, 0.0), Vocab::kBlank);
  s.proj = kernels::matmul(s.output, joint_pred_.w->value);
  for (int i = 0; i < s.proj.cols(); ++i) s.proj[i] += joint_pred_.b->value[i];
  return s;
}

PredState FirstPassModel::advance(const PredState& prev, int label) const {
  ARF_CHECK(label >= 1 && label <= config_.num_labels, "advance() needs a label, got " << label);
  PredState s;
  s.output = pred_step(prev.output, label);
  s.proj = kernels::matmul(s.output, joint_pred_.w->value);
  for (int i = 0; i < s.proj.cols(); ++i) s.proj[i] += joint_pred_.b->value[i];
  return s;
}

std::vector<double> FirstPassModel::joint_log_probs(std::span<const double> enc_proj_row,
                                                    const PredState& s) const {
  const int jd = config_.joint_dim;
  Tensor z({1, jd});
  for (int i = 0; i < jd; ++i) z[i] = std::tanh(enc_proj_row[i] + s.proj[i]);
  Tensor logits = kernels::matmul(z, joint_out_.w->value);
  for (int i = 0; i < logits.cols(); ++i) logits[i] += joint_out_.b->value[i];
  const double lse = kernels::logsumexp(logits.values());
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// --------------------------------------------------------------- loss

namespace {

struct LatticeView {
  const Tensor& lp;
  int frames;
  int ulen;  // U + 1
  double blank(int t, int u) const { return lp.at(t * ulen + u, Vocab::kBlank); }
  double label(int t, int u, int k) const { return lp.at(t * ulen + u, k); }
};

void check_lattice(const Tensor& lattice, int frames, const LabelSequence& target) {
  ARF_CHECK(frames >= 1, "transducer loss needs T' >= 1");
  ARF_CHECK(lattice.rows() == frames * (target.size() + 1),
            "lattice has " << lattice.rows() << " rows, expected " << frames * (target.size() + 1));
  for (int tok : target.tokens) {
    ARF_CHECK(tok >= 1 && tok < lattice.cols(), "target label " << tok << " out of range");
  }
}

}  // namespace

double rnnt_neg_log_likelihood(const Tensor& lattice, int frames, const LabelSequence& target,
                               Tensor* grad) {
  check_lattice(lattice, frames, target);
  const int ulen = target.size() + 1;
  const LatticeView lv{lattice, frames, ulen};
  const auto& y = target.tokens;
  std::vector<double> alpha(static_cast<std::size_t>(frames) * ulen, kNegInf);
  auto A = [&](int t, int u) -> double& { return alpha[static_cast<std::size_t>(t) * ulen + u]; };
  for (int t = 0; t < frames; ++t) {
    for (int u = 0; u < ulen; ++u) {
      if (t == 0 && u == 0) {
        A(t, u) = 0.0;
        continue;
      }
      double acc = kNegInf;
      if (t > 0) acc = A(t - 1, u) + lv.blank(t - 1, u);
      if (u > 0) acc = kernels::log_add(acc, A(t, u - 1) + lv.label(t, u - 1, y[u - 1]));
      A(t, u) = acc;
    }
  }
  const double log_total = A(frames - 1, ulen - 1) + lv.blank(frames - 1, ulen - 1);
  if (!grad) return -log_total;

  std::vector<double> beta(alpha.size(), kNegInf);
  auto B = [&](int t, int u) -> double& { return beta[static_cast<std::size_t>(t) * ulen + u]; };
  for (int t = frames - 1; t >= 0; --t) {
    for (int u = ulen - 1; u >= 0; --u) {
      if (t == frames - 1 && u == ulen - 1) {
        B(t, u) = lv.blank(t, u);
        continue;
      }
      double acc = kNegInf;
      if (t + 1 < frames) acc = B(t + 1, u) + lv.blank(t, u);
      if (u + 1 < ulen) acc = kernels::log_add(acc, B(t, u + 1) + lv.label(t, u, y[u]));
      B(t, u) = acc;
    }
  }
  *grad = Tensor(lattice.shape(), 0.0);
  for (int t = 0; t < frames; ++t) {
    for (int u = 0; u < ulen; ++u) {
      const int row = t * ulen + u;
      const double a = A(t, u);
      if (t + 1 < frames) {
        grad->at(row, Vocab::kBlank) = -std::exp(a + lv.blank(t, u) + B(t + 1, u) - log_total);
      } else if (u == ulen - 1) {
        grad->at(row, Vocab::kBlank) = -std::exp(a + lv.blank(t, u) - log_total);
      }
      if (u + 1 < ulen) {
        grad->at(row, y[u]) = -std::exp(a + lv.label(t, u, y[u]) + B(t, u + 1) - log_total);
      }
    }
  }
  return -log_total;
}

double rnnt_loss_oracle(const Tensor& lattice, int frames, const LabelSequence& target) {
  check_lattice(lattice, frames, target);
  const int ulen = target.size() + 1;
  const LatticeView lv{lattice, frames, ulen};
  double log_total = kNegInf;
  // Depth-first walk over every path; each step is a blank (t+1) or the next
  // label (u+1). A path ends with the blank leaving (T'-1, U).
  std::vector<std::pair<int, int>> stack_t_u{{0, 0}};
  std::vector<double> stack_score{0.0};
  while (!stack_t_u.empty()) {
    auto [t, u] = stack_t_u.back();
    const double score = stack_score.back();
    stack_t_u.pop_back();
    stack_score.pop_back();
    if (t == frames - 1 && u == ulen - 1) {
      log_total = kernels::log_add(log_total, score + lv.blank(t, u));
      continue;
    }
    if (t + 1 < frames) {
      stack_t_u.emplace_back(t + 1, u);
      stack_score.push_back(score + lv.blank(t, u));
    }
    if (u + 1 < ulen) {
      stack_t_u.emplace_back(t, u + 1);
      stack_score.push_back(score + lv.label(t, u, target.tokens[u]));
    }
  }
  return -log_total;
}

Var rnnt_loss(Var lattice, int frames, const LabelSequence& target) {
  Graph& g = lattice.graph();
  const bool want_grad = g.recording() && g.requires_grad(lattice);
  Tensor grad;
  const double loss = rnnt_neg_log_likelihood(lattice.value(), frames, target, want_grad ? &grad : nullptr);
  return g.push(Tensor::scalar(loss), want_grad, [lattice, grad = std::move(grad)](Graph& gr, const Tensor& gout) {
    Tensor scaled = grad;
    for (double& v : scaled.values()) v *= gout[0];
    gr.accumulate(lattice, scaled);
  });
}

// --------------------------------------------------------------- search

namespace {

struct Candidate {
  int source;  // index into the active list
  int token;   // 0 closes the frame
  double score;
};

}  // namespace

namespace {

class ModelScorer : public JointScorer {
 public:
  ModelScorer(const FirstPassModel& m, const Tensor& encoded) : m_(m), proj_(m.project_encoder(encoded)) {}
  int frames() const override { return proj_.rows(); }
  int classes() const override { return m_.config().num_labels + 1; }
  PredState initial() const override { return m_.initial_state(); }
  PredState advance(const PredState& s, int label) const override { return m_.advance(s, label); }
  std::vector<double> log_probs(int t, const PredState& s) const override {
    return m_.joint_log_probs(proj_.row(t), s);
  }

 private:
  const FirstPassModel& m_;
  Tensor proj_;
};

}  // namespace

std::vector<DecodeHypothesis> decode(const FirstPassModel& model, const Tensor& encoded,
                                     const DecodeOptions& opts) {
  return beam_search(ModelScorer(model, encoded), opts);
}

std::vector<DecodeHypothesis> beam_search(const JointScorer& model, const DecodeOptions& opts) {
  ARF_CHECK(opts.beam_size >= 1, "beam_size must be >= 1");
  ARF_CHECK(opts.max_emit_per_frame >= 1, "max_emit_per_frame must be >= 1");
  const int frames = model.frames();
  const int classes = model.classes();

  std::vector<DecodeHypothesis> beam(1);
  beam[0].pred_state = model.initial();

  for (int t = 0; t < frames; ++t) {
    std::vector<DecodeHypothesis> active = std::move(beam);
    std::vector<int> emitted(active.size(), 0);
    std::vector<DecodeHypothesis> finished;
    while (!active.empty()) {
      std::vector<Candidate> pool;
      for (int i = 0; i < static_cast<int>(active.size()); ++i) {
        const std::vector<double> lp = model.log_probs(t, active[i].pred_state);
        pool.push_back({i, Vocab::kBlank, active[i].log_score + lp[Vocab::kBlank]});
        if (emitted[i] >= opts.max_emit_per_frame) continue;
        for (int k = 1; k < classes; ++k) pool.push_back({i, k, active[i].log_score + lp[k]});
      }
      // Stable: equal scores keep generation order (source, then lower id).
      std::stable_sort(pool.begin(), pool.end(),
                       [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
      if (static_cast<int>(pool.size()) > opts.beam_size) pool.resize(opts.beam_size);

      std::vector<DecodeHypothesis> next_active;
      std::vector<int> next_emitted;
      for (const Candidate& c : pool) {
        const DecodeHypothesis& src = active[c.source];
        DecodeHypothesis h;
        h.labels = src.labels;
        h.alignment = src.alignment;
        h.alignment.tokens.push_back(c.token);
        h.log_score = c.score;
        if (c.token == Vocab::kBlank) {
          h.pred_state = src.pred_state;
          finished.push_back(std::move(h));
        } else {
          h.labels.tokens.push_back(c.token);
          h.pred_state = model.advance(src.pred_state, c.token);
          next_active.push_back(std::move(h));
          next_emitted.push_back(emitted[c.source] + 1);
        }
      }
      active = std::move(next_active);
      emitted = std::move(next_emitted);
    }
    // Merge equal label sequences, keeping the best-scoring path.
    std::stable_sort(finished.begin(), finished.end(),
                     [](const DecodeHypothesis& a, const DecodeHypothesis& b) { return a.log_score > b.log_score; });
    std::map<std::vector<int>, bool> seen;
    for (DecodeHypothesis& h : finished) {
      if (static_cast<int>(beam.size()) >= opts.beam_size) break;
      if (!seen.emplace(h.labels.tokens, true).second) continue;
      beam.push_back(std::move(h));
    }
  }
  return beam;
}

Tensor spec_augment(const Tensor& features, Rng& rng, const SpecAugmentOptions& opts) {
  Tensor out = features;
  const int frames = features.rows();
  const int dims = features.cols();
  const int max_t = static_cast<int>(std::ceil(opts.max_time_frac * frames));
  for (int m = 0; m < opts.num_time_masks; ++m) {
    const int width = rng.uniform_int(0, std::min(max_t, frames));
    const int start = rng.uniform_int(0, frames - width);
    for (int t = start; t < start + width; ++t) {
      for (double& v : out.row(t)) v = 0.0;
    }
  }
  const int max_f = static_cast<int>(std::ceil(opts.max_feat_frac * dims));
  for (int m = 0; m < opts.num_feat_masks; ++m) {
    const int width = rng.uniform_int(0, std::min(max_f, dims));
    const int start = rng.uniform_int(0, dims - width);
    for (int t = 0; t < frames; ++t) {
      for (int f = start; f < start + width; ++f) out.at(t, f) = 0.0;
    }
  }
  return out;
}

}  // namespace arf

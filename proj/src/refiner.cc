#include "arf/refiner.h"

#include <cmath>

#include "arf/ctc.h"

namespace arf {

void RefineConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("refiner." + key + ": " + why);
  };
  if (num_labels < 1) fail("num_labels", "must be >= 1");
  if (audio_dim < 1) fail("audio_dim", "must be >= 1");
  if (model_dim < 1) fail("model_dim", "must be >= 1");
  if (heads < 1 || model_dim % heads != 0) fail("heads", "must divide model_dim");
  if (layers < 1) fail("layers", "must be >= 1");
  if (cascade_layers < 0) fail("cascade_layers", "must be >= 0");
  if (ff_hidden < 1) fail("ff_hidden", "must be >= 1");
  if (right_context < 0) fail("right_context", "must be >= 0");
  if (train_steps < 1) fail("train_steps", "must be >= 1");
  if (infer_steps < 1) fail("infer_steps", "must be >= 1");
  if (!(mask_prob >= 0.0 && mask_prob < 1.0)) fail("mask_prob", "must satisfy 0 <= p < 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must satisfy 0 <= dropout < 1");
}

Refiner::Refiner(const RefineConfig& config, std::uint64_t seed)
    : config_(config), params_(std::make_unique<ParamStore>()) {
  config.validate();
  Rng rng = Rng(seed).split("refiner");
  ParamStore& ps = *params_;
  const int d = config.model_dim;
  audio_proj_ = Linear::create(ps, "refiner.enc1.input", config.audio_dim, d, rng);
  for (int i = 0; i < config.cascade_layers; ++i) {
    cascade_.push_back(EncoderLayer::create(ps, "refiner.enc1.layer" + std::to_string(i), d, config.heads,
                                            config.ff_hidden, rng));
  }
  if (config.cascade_layers > 0) cascade_norm_ = LayerNorm::create(ps, "refiner.enc1.final_norm", d);
  Rng emb_rng = rng.split("refiner.embed");
  embed_ = &ps.create("refiner.embed", init_normal(config.num_labels + 2, d, 1.0, emb_rng));
  for (int i = 0; i < config.layers; ++i) {
    const std::string name = "refiner.layer" + std::to_string(i);
    DecoderLayer l;
    l.norm_self = LayerNorm::create(ps, name + ".norm_self", d);
    l.self_attn = MultiHeadAttention::create(ps, name + ".selfattn", d, config.heads, rng);
    l.norm_cross = LayerNorm::create(ps, name + ".norm_cross", d);
    l.cross_attn = MultiHeadAttention::create(ps, name + ".crossattn", d, config.heads, rng);
    l.norm_ff = LayerNorm::create(ps, name + ".norm_ff", d);
    l.ff = FeedForward::create(ps, name + ".ff", d, config.ff_hidden, rng);
    layers_.push_back(l);
  }
  final_norm_ = LayerNorm::create(ps, "refiner.final_norm", d);
  output_ = Linear::create(ps, "refiner.output", d, config.num_labels + 1, rng);
}

Var Refiner::cascade_encode(Graph& g, Var first_pass_enc, const ForwardContext& ctx) const {
  ARF_CHECK(first_pass_enc.rows() >= 1, "cascade_encode needs at least one frame");
  Var x = audio_proj_(g, first_pass_enc);
  x = add(x, g.constant(sinusoidal_positions(first_pass_enc.rows(), config_.model_dim)));
  if (cascade_.empty()) return x;
  for (const EncoderLayer& layer : cascade_) x = layer(g, x, config_.right_context, ctx);
  return cascade_norm_(g, x);
}

Tensor Refiner::cascade_encode(const Tensor& first_pass_enc) const {
  Graph g(false);
  return cascade_encode(g, g.constant(first_pass_enc)).value();
}

Var Refiner::step_log_probs(Graph& g, const Alignment& input, Var audio, const ForwardContext& ctx) const {
  ARF_CHECK(input.size() >= 1, "refinement needs a nonempty alignment");
  for (int tok : input.tokens) {
    ARF_CHECK(tok >= 0 && tok <= vocab().mask_id(), "alignment token " << tok << " outside vocabulary");
  }
  Var x = embedding(g.param(*embed_), input.tokens);
  x = add(x, g.constant(sinusoidal_positions(input.size(), config_.model_dim)));
  x = ctx.maybe_dropout(x);
  for (const DecoderLayer& l : layers_) {
    Var h = l.norm_self(g, x);
    x = add(x, ctx.maybe_dropout(l.self_attn(g, h, h, /*right_context=*/-1)));
    x = add(x, ctx.maybe_dropout(l.cross_attn(g, l.norm_cross(g, x), audio, /*right_context=*/-1)));
    x = add(x, ctx.maybe_dropout(l.ff(g, l.norm_ff(g, x))));
  }
  return log_softmax_rows(output_(g, final_norm_(g, x)));
}

StepOutput refine_step(Graph& g, const Refiner& model, const Alignment& input, Var audio,
                       const ForwardContext& ctx) {
  StepOutput out;
  out.log_probs = model.step_log_probs(g, input, audio, ctx);
  out.output = greedy_alignment(out.log_probs.value());
  return out;
}

RefineLoss refine_train_loss(Graph& g, const Refiner& model, Var audio, const Alignment& a0,
                             const LabelSequence& target, int steps, double mask_prob, Rng& rng,
                             const ForwardContext& ctx) {
  ARF_CHECK(steps >= 1, "training needs at least one refinement step");
  const Vocab vocab = model.vocab();
  const bool separate_clean_pass =
      model.config().clean_step_inputs && ctx.rng != nullptr && ctx.dropout > 0.0;
  RefineLoss out;
  std::vector<Var> losses;
  Alignment previous = a0;
  for (int i = 0; i < steps; ++i) {
    const Alignment input = mask_augment(previous, mask_prob, vocab, rng);
    StepOutput step = refine_step(g, model, input, audio, ctx);
    Var loss = ctc_loss(step.log_probs, target);
    out.step_losses.push_back(loss.value().item());
    losses.push_back(loss);
    if (i + 1 == steps) break;
    if (separate_clean_pass) {
      Graph clean(false);
      previous = greedy_alignment(model.step_log_probs(clean, input, clean.constant(audio.value())).value());
    } else {
      previous = step.output;
    }
  }
  BatchLoss mean = mean_of_feasible(losses);
  out.loss = mean.loss;
  out.feasible = mean.feasible;
  return out;
}

RefineResult refine_decode(const Refiner& model, const Tensor& audio, const Alignment& a0, int steps,
                           const LabelSequence* reference) {
  ARF_CHECK(steps >= 1, "refine_decode needs R >= 1");
  const Vocab vocab = model.vocab();
  RefineResult out;
  Alignment current = a0;
  for (int i = 0; i < steps; ++i) {
    Graph g(false);
    StepOutput step = refine_step(g, model, current, g.constant(audio));
    if (reference) out.step_ctc.push_back(ctc_neg_log_likelihood(step.log_probs.value(), *reference));
    current = std::move(step.output);
    out.per_step.push_back(collapse(current, vocab));
    out.alignments.push_back(current);
  }
  out.final = out.per_step.back();
  return out;
}

}  // namespace arf

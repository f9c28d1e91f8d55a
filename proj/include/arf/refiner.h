// Second pass: a cascaded encoder with bounded right context over the frozen
// first-pass encoder output, and a shared-parameter decoder that maps an
// alignment to a new alignment of the same length.
#pragma once

#include <memory>
#include <vector>

#include "arf/alignkit.h"
#include "arf/autograd.h"
#include "arf/layers.h"

namespace arf {

struct RefineConfig {
  int num_labels = 16;
  int audio_dim = 32;       // width of the first-pass encoder output
  int model_dim = 64;       // D
  int layers = 4;           // L
  int cascade_layers = 0;   // L'
  int heads = 4;
  int ff_hidden = 128;
  int right_context = 3;    // frames of look-ahead per cascade layer
  int train_steps = 3;      // S
  int infer_steps = 4;      // R
  double mask_prob = 0.0;   // p
  double dropout = 0.0;
  // With dropout on, the alignment handed to the next training step comes
  // from a dropout-free forward.
  bool clean_step_inputs = true;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

struct DecoderLayer {
  LayerNorm norm_self, norm_cross, norm_ff;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
};

class Refiner {
 public:
  Refiner(const RefineConfig& config, std::uint64_t seed);
  Refiner(const Refiner&) = delete;
  Refiner& operator=(const Refiner&) = delete;

  const RefineConfig& config() const { return config_; }
  Vocab vocab() const { return Vocab{config_.num_labels}; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }

  // [T' x audio_dim] -> [T' x D]. Output frame t only sees input frames
  // up to t + right_context * cascade_layers.
  Var cascade_encode(Graph& g, Var first_pass_enc, const ForwardContext& ctx = {}) const;
  Tensor cascade_encode(const Tensor& first_pass_enc) const;

  // Log-probabilities [T x (V+1)] for an input alignment (masks allowed).
  Var step_log_probs(Graph& g, const Alignment& input, Var audio, const ForwardContext& ctx = {}) const;

 private:
  RefineConfig config_;
  std::unique_ptr<ParamStore> params_;
  Linear audio_proj_;
  std::vector<EncoderLayer> cascade_;
  LayerNorm cascade_norm_;
  Parameter* embed_ = nullptr;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
  Linear output_;
};

struct StepOutput {
  Var log_probs;
  Alignment output;
};

// One refinement step: log-probabilities plus their greedy alignment.
StepOutput refine_step(Graph& g, const Refiner& model, const Alignment& input, Var audio,
                       const ForwardContext& ctx = {});

struct RefineLoss {
  Var loss;                         // mean CTC loss over feasible steps
  std::vector<double> step_losses;  // +inf for infeasible steps
  int feasible = 0;
  bool usable() const { return feasible > 0; }
};

// Training objective: S steps from a0; each step's input is the previous
// output with mask augmentation applied independently. The argmax between
// steps carries no gradient.
RefineLoss refine_train_loss(Graph& g, const Refiner& model, Var audio, const Alignment& a0,
                             const LabelSequence& target, int steps, double mask_prob, Rng& rng,
                             const ForwardContext& ctx = {});

struct RefineResult {
  LabelSequence final;
  std::vector<LabelSequence> per_step;
  std::vector<Alignment> alignments;  // A^1 .. A^R
  std::vector<double> step_ctc;       // CTC loss per step, when a reference is given
};

// Inference: R unmasked greedy steps from a0.
RefineResult refine_decode(const Refiner& model, const Tensor& audio, const Alignment& a0, int steps,
                           const LabelSequence* reference = nullptr);

}  // namespace arf

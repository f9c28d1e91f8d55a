// First-pass streaming transducer: causal encoder, recurrent prediction
// network, additive joint network, the transducer loss, and frame-synchronous
// beam search that reports frame alignments.
#pragma once

#include <memory>
#include <vector>

#include "arf/alignkit.h"
#include "arf/autograd.h"
#include "arf/layers.h"

namespace arf {

struct FirstPassConfig {
  int num_labels = 16;
  int input_dim = 8;
  int model_dim = 32;
  int layers = 3;
  int heads = 4;
  int ff_hidden = 64;
  int joint_dim = 32;
  int max_emit_per_frame = 4;
};

struct PredState {
  Tensor output;  // [1 x model_dim]
  Tensor proj;    // output * W_pred + b_joint, [1 x joint_dim]
};

struct DecodeHypothesis {
  LabelSequence labels;
  Alignment alignment;
  double log_score = 0.0;
  PredState pred_state;
};

class FirstPassModel {
 public:
  FirstPassModel(const FirstPassConfig& config, std::uint64_t seed);
  FirstPassModel(const FirstPassModel&) = delete;
  FirstPassModel& operator=(const FirstPassModel&) = delete;

  const FirstPassConfig& config() const { return config_; }
  Vocab vocab() const { return Vocab{config_.num_labels}; }
  ParamStore& params() { return *params_; }
  const ParamStore& params() const { return *params_; }

  // [T' x F] -> [T' x model_dim]; output frame t depends on inputs 0..t only.
  Var encode(Graph& g, Var features) const;
  Tensor encode_causal(const Tensor& features) const;

  // Prediction network outputs for contexts <s>, y1, ..., yU: [(U+1) x D].
  Var predict(Graph& g, const LabelSequence& context) const;
  // Joint log-probabilities over the lattice, row t * (U+1) + u.
  Var lattice_log_probs(Graph& g, Var enc, Var pred) const;
  // Transducer negative log-likelihood of target given encoder output.
  Var loss(Graph& g, Var enc, const LabelSequence& target) const;

  // Incremental pieces used by search.
  Tensor project_encoder(const Tensor& enc) const;  // enc * W_enc
  PredState initial_state() const;
  PredState advance(const PredState& s, int label) const;
  // log p(k | frame, state) for all k, from a row of project_encoder().
  std::vector<double> joint_log_probs(std::span<const double> enc_proj_row, const PredState& s) const;

 private:
  Tensor pred_step(const Tensor& prev_output, int label) const;

  FirstPassConfig config_;
  std::unique_ptr<ParamStore> params_;
  Linear input_proj_;
  std::vector<EncoderLayer> layers_;
  LayerNorm final_norm_;
  Parameter* pred_embed_ = nullptr;
  Linear pred_in_;
  Parameter* pred_rec_ = nullptr;
  Parameter* joint_enc_ = nullptr;
  Linear joint_pred_;
  Linear joint_out_;
};

// Transducer loss on a precomputed lattice of log-probabilities
// [(T' * (U+1)) x (V+1)]. Blank is column 0.
double rnnt_neg_log_likelihood(const Tensor& lattice, int frames, const LabelSequence& target,
                               Tensor* grad = nullptr);
// Exhaustive sum over every monotone lattice path.
double rnnt_loss_oracle(const Tensor& lattice, int frames, const LabelSequence& target);
Var rnnt_loss(Var lattice, int frames, const LabelSequence& target);

struct DecodeOptions {
  int beam_size = 1;
  int max_emit_per_frame = 4;
};

// What the search needs from a transducer: per-frame joint log-probabilities
// given a prediction state.
class JointScorer {
 public:
  virtual ~JointScorer() = default;
  virtual int frames() const = 0;
  virtual int classes() const = 0;  // V + 1, blank first
  virtual PredState initial() const = 0;
  virtual PredState advance(const PredState& s, int label) const = 0;
  virtual std::vector<double> log_probs(int t, const PredState& s) const = 0;
};

// Frame-synchronous beam search. Within a frame every hypothesis may emit up
// to max_emit_per_frame labels before the blank that closes the frame, so
// every alignment holds exactly frames() blanks. Results are sorted by
// descending log_score; hypotheses with equal labels are merged (max).
// beam_size 1 is greedy.
std::vector<DecodeHypothesis> beam_search(const JointScorer& scorer, const DecodeOptions& opts);
std::vector<DecodeHypothesis> decode(const FirstPassModel& model, const Tensor& encoded,
                                     const DecodeOptions& opts);

struct SpecAugmentOptions {
  int num_time_masks = 2;
  double max_time_frac = 0.1;
  int num_feat_masks = 1;
  double max_feat_frac = 0.25;
};

// Zeroes random time spans and feature channels. Training only.
Tensor spec_augment(const Tensor& features, Rng& rng, const SpecAugmentOptions& opts = {});

}  // namespace arf

// Connectionist temporal classification loss.
#pragma once

#include <span>
#include <vector>

#include "arf/alignkit.h"
#include "arf/autograd.h"

namespace arf {

// Frames a target needs: one per label plus one blank between equal
// neighbours.
int ctc_min_frames(const LabelSequence& target);

// -log sum over all length-T alignments a with collapse(a) == target of
// prod_t exp(log_probs[t, a_t]). log_probs is [T x (V+1)] with blank in
// column 0. Returns +inf for unreachable targets. If grad is non-null it
// receives d loss / d log_probs (zeros when infeasible).
double ctc_neg_log_likelihood(const Tensor& log_probs, const LabelSequence& target,
                              Tensor* grad = nullptr);

// Brute-force reference: enumerates all (V+1)^T sequences. Requires
// (V+1)^T <= 1e6.
double ctc_loss_oracle(const Tensor& log_probs, const LabelSequence& target);

// Differentiable CTC loss; value is +inf when the target is unreachable.
Var ctc_loss(Var log_probs, const LabelSequence& target);

struct CtcInstance {
  Var log_probs;
  LabelSequence target;
};

struct BatchLoss {
  Var loss;           // mean over feasible terms; invalid when feasible == 0
  int feasible = 0;
  int skipped = 0;
};

// Mean of the finite entries of per-item losses.
BatchLoss mean_of_feasible(std::span<const Var> losses);

// Mean CTC loss over feasible instances; throws RuntimeFailure when none is.
BatchLoss ctc_batch_loss(std::span<const CtcInstance> instances);

}  // namespace arf

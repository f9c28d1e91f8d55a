// Adam with bias correction and global-norm clipping.
#pragma once

#include <map>
#include <span>
#include <string>

#include "arf/autograd.h"

namespace arf {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  // One update using each parameter's current grad. step counts from 1.
  // Parameters are visited in name order so the result is order-independent
  // of how the span was assembled.
  void step(std::span<Parameter* const> params, double lr, long step);
  void step(std::span<Parameter* const> params, long step) { this->step(params, opts_.lr, step); }

  const AdamOptions& options() const { return opts_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamOptions opts_;
  std::map<std::string, Moments> moments_;
};

// Scales gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

// Linear warmup to base_lr over warmup_steps, then constant.
double warmup_lr(double base_lr, long step, long warmup_steps);

}  // namespace arf

// Central finite-difference check of Graph::backward.
#pragma once

#include <functional>
#include <span>

#include "arf/autograd.h"

namespace arf {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;  // "<param>[index]" of the largest error
};

// loss_fn builds a scalar loss on the graph it is given. Every entry of
// every parameter is perturbed by +-h unless max_entries > 0, in which case
// that many entries per parameter are sampled with rng. The error of one
// entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult gradient_check(std::span<Parameter* const> params, const std::function<Var(Graph&)>& loss_fn,
                               double h = 1e-5, int max_entries = 0, Rng* rng = nullptr, double floor = 1e-4);

}  // namespace arf

#include "arf/optim.h"

#include <algorithm>
#include <cmath>
#include <vector>

namespace arf {

void Adam::step(std::span<Parameter* const> params, double lr, long step) {
  ARF_CHECK(step >= 1, "Adam step counter starts at 1, got " << step);
  std::vector<Parameter*> ordered(params.begin(), params.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step));
  for (Parameter* p : ordered) {
    ARF_CHECK(same_shape(p->value, p->grad), "gradient shape differs for " << p->name);
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Tensor(p->value.shape(), 0.0);
      mom.v = Tensor(p->value.shape(), 0.0);
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mom.m[i] = opts_.beta1 * mom.m[i] + (1.0 - opts_.beta1) * g;
      mom.v[i] = opts_.beta2 * mom.v[i] + (1.0 - opts_.beta2) * g * g;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      p->value[i] -= lr * m_hat / (std::sqrt(v_hat) + opts_.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.values()) g *= s;
    }
  }
  return norm;
}

double warmup_lr(double base_lr, long step, long warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace arf

#include "arf/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "arf/check.h"

namespace arf {

GradCheckResult gradient_check(std::span<Parameter* const> params, const std::function<Var(Graph&)>& loss_fn,
                               double h, int max_entries, Rng* rng, double floor) {
  {
    Graph g;
    Var loss = loss_fn(g);
    ARF_CHECK(loss.rows() == 1 && loss.cols() == 1, "gradient_check needs a scalar loss");
    g.backward(loss, params);
  }
  auto eval = [&]() {
    Graph g(false);
    return loss_fn(g).value().item();
  };
  GradCheckResult out;
  for (Parameter* p : params) {
    const int n = static_cast<int>(p->value.size());
    std::vector<int> entries;
    if (max_entries > 0 && max_entries < n) {
      ARF_CHECK(rng != nullptr, "sampling entries needs an rng");
      for (int k = 0; k < max_entries; ++k) entries.push_back(rng->uniform_int(0, n - 1));
    } else {
      for (int i = 0; i < n; ++i) entries.push_back(i);
    }
    for (int i : entries) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = eval();
      p->value[i] = saved - h;
      const double down = eval();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++out.checked;
      if (err > out.max_rel_error || out.worst.empty()) {
        out.max_rel_error = std::max(out.max_rel_error, err);
        if (err >= out.max_rel_error) out.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace arf

#include "arf/ctc.h"

#include <cmath>
#include <limits>

namespace arf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<int> extended_labels(const LabelSequence& target) {
  std::vector<int> ext(2 * target.size() + 1, Vocab::kBlank);
  for (int u = 0; u < target.size(); ++u) ext[2 * u + 1] = target.tokens[u];
  return ext;
}

// s-2 -> s is legal only between distinct labels.
bool can_skip(const std::vector<int>& ext, int s) {
  return s >= 2 && ext[s] != Vocab::kBlank && ext[s] != ext[s - 2];
}

}  // namespace

int ctc_min_frames(const LabelSequence& target) {
  int frames = target.size();
  for (int u = 1; u < target.size(); ++u) {
    if (target.tokens[u] == target.tokens[u - 1]) ++frames;
  }
  return frames;
}

double ctc_neg_log_likelihood(const Tensor& log_probs, const LabelSequence& target, Tensor* grad) {
  const int t_len = log_probs.rows();
  const int classes = log_probs.cols();
  ARF_CHECK(t_len >= 1, "CTC needs at least one frame");
  for (int tok : target.tokens) {
    ARF_CHECK(tok >= 1 && tok < classes, "target label " << tok << " outside [1, " << classes - 1 << "]");
  }
  if (grad) *grad = Tensor(log_probs.shape(), 0.0);
  if (ctc_min_frames(target) > t_len) return std::numeric_limits<double>::infinity();

  const std::vector<int> ext = extended_labels(target);
  const int s_len = static_cast<int>(ext.size());
  auto lp = [&](int t, int s) { return log_probs.at(t, ext[s]); };

  std::vector<double> alpha(static_cast<std::size_t>(t_len) * s_len, kNegInf);
  auto A = [&](int t, int s) -> double& { return alpha[static_cast<std::size_t>(t) * s_len + s]; };
  A(0, 0) = lp(0, 0);
  if (s_len > 1) A(0, 1) = lp(0, 1);
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = A(t - 1, s);
      if (s >= 1) acc = kernels::log_add(acc, A(t - 1, s - 1));
      if (can_skip(ext, s)) acc = kernels::log_add(acc, A(t - 1, s - 2));
      A(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  double log_total = A(t_len - 1, s_len - 1);
  if (s_len > 1) log_total = kernels::log_add(log_total, A(t_len - 1, s_len - 2));
  if (log_total == kNegInf) return std::numeric_limits<double>::infinity();
  if (!grad) return -log_total;

  // Backward variables include the emission at t, like alpha.
  std::vector<double> beta(alpha.size(), kNegInf);
  auto B = [&](int t, int s) -> double& { return beta[static_cast<std::size_t>(t) * s_len + s]; };
  B(t_len - 1, s_len - 1) = lp(t_len - 1, s_len - 1);
  if (s_len > 1) B(t_len - 1, s_len - 2) = lp(t_len - 1, s_len - 2);
  for (int t = t_len - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double acc = B(t + 1, s);
      if (s + 1 < s_len) acc = kernels::log_add(acc, B(t + 1, s + 1));
      if (s + 2 < s_len && can_skip(ext, s + 2)) acc = kernels::log_add(acc, B(t + 1, s + 2));
      B(t, s) = acc == kNegInf ? kNegInf : acc + lp(t, s);
    }
  }
  for (int t = 0; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      const double a = A(t, s);
      const double b = B(t, s);
      if (a == kNegInf || b == kNegInf) continue;
      grad->at(t, ext[s]) -= std::exp(a + b - lp(t, s) - log_total);
    }
  }
  return -log_total;
}

double ctc_loss_oracle(const Tensor& log_probs, const LabelSequence& target) {
  const int t_len = log_probs.rows();
  const int classes = log_probs.cols();
  double count = 1.0;
  for (int t = 0; t < t_len; ++t) count *= classes;
  ARF_CHECK(count <= 1e6, "oracle instance too large: " << count << " sequences");
  const Vocab vocab{classes - 1};
  Alignment a;
  a.tokens.assign(t_len, 0);
  double log_total = kNegInf;
  const long n = static_cast<long>(count);
  for (long idx = 0; idx < n; ++idx) {
    long rem = idx;
    double path = 0.0;
    for (int t = t_len - 1; t >= 0; --t) {
      a.tokens[t] = static_cast<int>(rem % classes);
      rem /= classes;
      path += log_probs.at(t, a.tokens[t]);
    }
    if (collapse(a, vocab) == target) log_total = kernels::log_add(log_total, path);
  }
  return log_total == kNegInf ? std::numeric_limits<double>::infinity() : -log_total;
}

Var ctc_loss(Var log_probs, const LabelSequence& target) {
  Graph& g = log_probs.graph();
  const bool want_grad = g.recording() && g.requires_grad(log_probs);
  Tensor grad;
  const double loss = ctc_neg_log_likelihood(log_probs.value(), target, want_grad ? &grad : nullptr);
  const bool rg = want_grad && std::isfinite(loss);
  return g.push(Tensor::scalar(loss), rg, [log_probs, grad = std::move(grad)](Graph& gr, const Tensor& gout) {
    Tensor scaled = grad;
    for (double& v : scaled.values()) v *= gout[0];
    gr.accumulate(log_probs, scaled);
  });
}

BatchLoss mean_of_feasible(std::span<const Var> losses) {
  BatchLoss out;
  std::vector<Var> kept;
  for (const Var& l : losses) {
    if (std::isfinite(l.value().item())) {
      kept.push_back(l);
    } else {
      ++out.skipped;
    }
  }
  out.feasible = static_cast<int>(kept.size());
  if (kept.empty()) return out;
  out.loss = scale(sum(concat_rows(kept)), 1.0 / static_cast<double>(kept.size()));
  return out;
}

BatchLoss ctc_batch_loss(std::span<const CtcInstance> instances) {
  std::vector<Var> losses;
  losses.reserve(instances.size());
  for (const CtcInstance& inst : instances) losses.push_back(ctc_loss(inst.log_probs, inst.target));
  BatchLoss out = mean_of_feasible(losses);
  if (out.feasible == 0) throw RuntimeFailure("ctc_batch_loss: every instance is infeasible");
  return out;
}

}  // namespace arf

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "arf/check.h"
#include "arf/ctc.h"
#include "arf/harness.h"
#include "arf/optim.h"

namespace arf {

namespace {

// Batch b of an endless sequence of shuffled epochs.
class BatchSchedule {
 public:
  BatchSchedule(int n, int batch, Rng rng) : n_(n), batch_(batch), rng_(rng) {}

  std::vector<int> batch(long step) {
    std::vector<int> out;
    const long first = (step - 1) * batch_;
    for (long k = first; k < first + batch_; ++k) {
      const long epoch = k / n_;
      if (epoch != epoch_) reshuffle(epoch);
      out.push_back(order_[k % n_]);
    }
    return out;
  }

 private:
  void reshuffle(long epoch) {
    epoch_ = epoch;
    order_.resize(n_);
    for (int i = 0; i < n_; ++i) order_[i] = i;
    Rng r = rng_.split(static_cast<std::uint64_t>(epoch));
    for (int i = n_ - 1; i > 0; --i) std::swap(order_[i], order_[r.uniform_int(0, i)]);
  }

  int n_;
  int batch_;
  Rng rng_;
  long epoch_ = -1;
  std::vector<int> order_;
};

struct StepStats {
  double loss = 0.0;
  long skips = 0;
  bool updated = false;
};

struct LoopResult {
  std::vector<MetricsRow> history;
  long steps_run = 0;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  long skips = 0;
};

// Shared optimisation loop: warmup, clipping, Adam, periodic dev evaluation
// and early stopping. The best parameters are restored on exit.
LoopResult run_loop(const TrainOptions& opts, ParamStore& store, const std::string& prefix, bool record_wall,
                    const std::function<StepStats(long)>& step_fn,
                    const std::function<MetricsRow()>& eval_fn, MetricsWriter* metrics, const Logger& log,
                    const std::string& what) {
  std::vector<Parameter*> params = store.with_prefix(prefix);
  Adam adam(AdamOptions{opts.lr, opts.beta1, opts.beta2, opts.eps});
  LoopResult out;
  std::vector<Tensor> best;
  int bad_evals = 0;
  long interval_skips = 0;
  double interval_loss = 0.0;
  long interval_updates = 0;
  const auto start = std::chrono::steady_clock::now();

  for (long step = 1; step <= opts.max_steps; ++step) {
    StepStats st = step_fn(step);
    interval_skips += st.skips;
    out.skips += st.skips;
    if (st.updated) {
      if (!std::isfinite(st.loss)) {
        throw RuntimeFailure(what + ": loss became " + std::to_string(st.loss) + " at step " + std::to_string(step));
      }
      clip_grad_norm(params, opts.clip_norm);
      for (Parameter* p : params) {
        if (!p->grad.all_finite()) throw RuntimeFailure(what + ": non-finite gradient at step " + std::to_string(step));
      }
      adam.step(params, warmup_lr(opts.lr, step, opts.warmup_steps), step);
      interval_loss += st.loss;
      ++interval_updates;
    }
    out.steps_run = step;

    if (step % opts.eval_interval != 0 && step != opts.max_steps) continue;
    MetricsRow row = eval_fn();
    row.step = step;
    row.skips = interval_skips;
    if (record_wall) {
      row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    if (metrics) metrics->write(row);
    out.history.push_back(row);
    if (log) {
      std::ostringstream os;
      os << what << " step " << step << " train_loss "
         << (interval_updates ? interval_loss / interval_updates : 0.0) << " dev_loss " << row.loss
         << " dev_wer_first " << row.wer_first;
      for (std::size_t i = 0; i < row.wer_steps.size(); ++i) os << " step" << i + 1 << ' ' << row.wer_steps[i];
      if (interval_skips) os << " skipped " << interval_skips;
      log(os.str());
    }
    interval_skips = 0;
    interval_loss = 0.0;
    interval_updates = 0;

    if (!std::isfinite(row.loss)) throw RuntimeFailure(what + ": dev loss is not finite at step " + std::to_string(step));
    if (row.loss < out.best_dev_loss) {
      out.best_dev_loss = row.loss;
      best.clear();
      for (Parameter* p : params) best.push_back(p->value);
      bad_evals = 0;
    } else if (++bad_evals >= opts.patience) {
      if (log) log(what + ": early stop at step " + std::to_string(step));
      break;
    }
  }
  for (std::size_t i = 0; i < best.size(); ++i) params[i]->value = best[i];
  return out;
}

}  // namespace

FirstPassResult train_first_pass(const ExperimentConfig& cfg, const std::vector<Utterance>& train,
                                 const std::vector<Utterance>& dev, MetricsWriter* metrics, const Logger& log) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train corpus is empty");
  if (dev.empty()) throw ValidationError("dev corpus is empty");
  const TrainOptions& opts = cfg.first_train;
  FirstPassResult res;
  res.model = std::make_unique<FirstPassModel>(cfg.first_pass, hash_combine(cfg.seed, hash_string("first_pass")));
  FirstPassModel& model = *res.model;
  std::vector<Parameter*> params = model.params().all();
  const Rng root = Rng(cfg.seed).split("first_pass_train");
  BatchSchedule schedule(static_cast<int>(train.size()), opts.batch_size, root.split("order"));

  auto step_fn = [&](long step) {
    const std::vector<int> batch = schedule.batch(step);
    Graph g;
    std::vector<Var> losses;
    const Rng step_rng = root.split("augment").split(static_cast<std::uint64_t>(step));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Utterance& u = train[batch[i]];
      Rng r = step_rng.split(static_cast<std::uint64_t>(i));
      Tensor feats = opts.spec_augment ? spec_augment(u.features, r, cfg.spec_augment) : u.features;
      Var enc = model.encode(g, g.constant(std::move(feats)));
      losses.push_back(model.loss(g, enc, u.target));
    }
    BatchLoss mean = mean_of_feasible(losses);
    StepStats st;
    st.skips = mean.skipped;
    if (mean.feasible == 0) return st;
    g.backward(mean.loss, params);
    st.loss = mean.loss.value().item();
    st.updated = true;
    return st;
  };
  auto eval_fn = [&]() {
    return evaluate(model, nullptr, dev, 0, cfg.beam_size, "dev");
  };
  LoopResult lr = run_loop(opts, model.params(), "", cfg.record_wall_time, step_fn, eval_fn, metrics, log,
                           "first_pass");
  res.history = std::move(lr.history);
  res.steps_run = lr.steps_run;
  res.best_dev_loss = lr.best_dev_loss;
  return res;
}

RefinerResult train_refiner(const ExperimentConfig& cfg, const FirstPassModel& first_pass,
                            const std::vector<Utterance>& train, const std::vector<Utterance>& dev,
                            MetricsWriter* metrics, const Logger& log) {
  cfg.validate();
  if (train.empty()) throw ValidationError("train corpus is empty");
  if (dev.empty()) throw ValidationError("dev corpus is empty");
  if (cfg.refiner.audio_dim != first_pass.config().model_dim || cfg.refiner.num_labels != first_pass.config().num_labels) {
    throw ValidationError("refiner widths do not match the first-pass model");
  }
  const std::uint64_t frozen = params_hash(first_pass.params());
  const TrainOptions& opts = cfg.refiner_train;
  const RefineConfig& rc = cfg.refiner;
  RefinerResult res;
  res.model = std::make_unique<Refiner>(rc, hash_combine(cfg.seed, hash_string("refiner")));
  Refiner& model = *res.model;
  std::vector<Parameter*> params = model.params().all();
  const Rng root = Rng(cfg.seed).split("refiner_train");
  BatchSchedule schedule(static_cast<int>(train.size()), opts.batch_size, root.split("order"));
  const DecodeOptions dopts{cfg.beam_size, cfg.first_pass.max_emit_per_frame};

  auto step_fn = [&](long step) {
    const std::vector<int> batch = schedule.batch(step);
    Graph g;
    std::vector<Var> losses;
    StepStats st;
    const Rng step_rng = root.split(static_cast<std::uint64_t>(step));
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Utterance& u = train[batch[i]];
      const Rng ur = step_rng.split(static_cast<std::uint64_t>(i));
      Rng aug = ur.split("augment");
      Rng mask = ur.split("mask");
      Rng drop = ur.split("dropout");
      Tensor feats = opts.spec_augment ? spec_augment(u.features, aug, cfg.spec_augment) : u.features;
      Tensor enc0 = first_pass.encode_causal(feats);
      const Alignment a0 = decode(first_pass, enc0, dopts).front().alignment;
      ForwardContext ctx{rc.dropout, rc.dropout > 0.0 ? &drop : nullptr};
      Var audio = model.cascade_encode(g, g.constant(std::move(enc0)), ctx);
      RefineLoss rl = refine_train_loss(g, model, audio, a0, u.target, rc.train_steps, rc.mask_prob, mask, ctx);
      if (!rl.usable()) {
        ++st.skips;
        continue;
      }
      losses.push_back(rl.loss);
    }
    if (losses.empty()) return st;
    BatchLoss mean = mean_of_feasible(losses);
    g.backward(mean.loss, params);
    st.loss = mean.loss.value().item();
    st.updated = true;
    return st;
  };
  auto eval_fn = [&]() {
    return evaluate(first_pass, &model, dev, rc.infer_steps, cfg.beam_size, "dev");
  };
  LoopResult lr = run_loop(opts, model.params(), "", cfg.record_wall_time, step_fn, eval_fn, metrics, log,
                           "refiner");
  if (params_hash(first_pass.params()) != frozen) {
    throw RuntimeFailure("first-pass parameters changed during refiner training");
  }
  res.history = std::move(lr.history);
  res.steps_run = lr.steps_run;
  res.skipped_samples = lr.skips;
  res.best_dev_loss = lr.best_dev_loss;
  return res;
}

}  // namespace arf

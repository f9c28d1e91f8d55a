#include <cmath>
#include <cstdlib>
#include <thread>

#include "arf/check.h"
#include "arf/harness.h"

namespace arf {

int worker_threads_from_env() {
  const char* v = std::getenv("AR_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw ValidationError(std::string("AR_THREADS: bad value '") + v + "'");
  return static_cast<int>(n);
}

UtteranceDecode decode_utterance(const FirstPassModel& fp, const Refiner* refiner, const Utterance& utt,
                                 int steps, int beam, int max_emit) {
  UtteranceDecode out;
  const Tensor enc0 = fp.encode_causal(utt.features);
  {
    Graph g(false);
    out.first_pass_loss = fp.loss(g, g.constant(enc0), utt.target).value().item();
  }
  DecodeHypothesis best = decode(fp, enc0, DecodeOptions{beam, max_emit}).front();
  out.first_pass = std::move(best.labels);
  out.first_alignment = std::move(best.alignment);
  if (!refiner || steps <= 0) return out;

  const Tensor audio = refiner->cascade_encode(enc0);
  RefineResult rr = refine_decode(*refiner, audio, out.first_alignment, steps, &utt.target);
  out.per_step = std::move(rr.per_step);
  out.step_alignments = std::move(rr.alignments);
  const int scored = std::min(steps, refiner->config().train_steps);
  double total = 0.0;
  int finite = 0;
  for (int i = 0; i < scored; ++i) {
    if (std::isfinite(rr.step_ctc[i])) {
      total += rr.step_ctc[i];
      ++finite;
    }
  }
  out.ctc_feasible = finite > 0;
  out.step_ctc_mean = finite ? total / finite : 0.0;
  return out;
}

MetricsRow evaluate(const FirstPassModel& fp, const Refiner* refiner, const std::vector<Utterance>& corpus,
                    int steps, int beam, const std::string& split, int threads) {
  ARF_CHECK(beam >= 1, "beam must be >= 1");
  if (threads <= 0) threads = worker_threads_from_env();
  const int n = static_cast<int>(corpus.size());
  const int max_emit = fp.config().max_emit_per_frame;
  std::vector<UtteranceDecode> results(n);
  // Static interleaved partition: the result of each utterance is independent
  // of which worker computes it.
  auto work = [&](int w, int nw) {
    for (int i = w; i < n; i += nw) results[i] = decode_utterance(fp, refiner, corpus[i], steps, beam, max_emit);
  };
  if (threads <= 1 || n <= 1) {
    work(0, 1);
  } else {
    const int nw = std::min(threads, n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nw);
    for (int w = 0; w < nw; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w, nw);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  MetricsRow row;
  row.split = split;
  const int r = refiner ? steps : 0;
  long ref_tokens = 0;
  EditCounts first;
  std::vector<EditCounts> per_step(r);
  double loss = 0.0;
  long counted = 0;
  for (int i = 0; i < n; ++i) {
    const auto& u = corpus[i];
    const auto& d = results[i];
    ref_tokens += static_cast<long>(u.target.tokens.size());
    first += edit_distance(u.target, d.first_pass);
    for (int s = 0; s < r; ++s) per_step[s] += edit_distance(u.target, d.per_step[s]);
    if (refiner) {
      if (d.ctc_feasible) {
        loss += d.step_ctc_mean;
        ++counted;
      } else {
        ++row.skips;
      }
    } else {
      loss += d.first_pass_loss;
      ++counted;
    }
  }
  row.loss = counted ? loss / counted : 0.0;
  row.wer_first = error_rate(first, ref_tokens);
  for (int s = 0; s < r; ++s) row.wer_steps.push_back(error_rate(per_step[s], ref_tokens));
  return row;
}

}  // namespace arf

// Training loops, evaluation, checkpoints, metrics and the ablation runner.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "arf/refiner.h"
#include "arf/rnnt.h"
#include "arf/synthdata.h"

namespace arf {

struct TrainOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  long warmup_steps = 100;
  long max_steps = 1000;
  int batch_size = 8;
  long eval_interval = 100;
  int patience = 10;
  bool spec_augment = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string task = "default";  // "default" or a task-spec JSON file
  std::string data_dir = "data";
  int beam_size = 1;             // first-pass beam for training and evaluation
  FirstPassConfig first_pass;
  RefineConfig refiner;
  TrainOptions first_train;
  TrainOptions refiner_train;
  SpecAugmentOptions spec_augment;
  bool record_wall_time = false;

  static ExperimentConfig defaults();
  // Unknown keys and invalid values raise ValidationError naming the key.
  static ExperimentConfig from_yaml_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_yaml() const;
  void validate() const;
  // Derives the model widths that depend on the task.
  void bind_task(const TaskSpec& spec);
};

TaskSpec resolve_task(const std::string& task);

// ------------------------------------------------------------ checkpoints

struct Checkpoint {
  std::string kind;    // "first_pass" or "refiner"
  std::string config;  // JSON echo of the model configuration
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  std::vector<std::pair<std::string, Tensor>> params;  // name order
};

Checkpoint make_checkpoint(const FirstPassModel& model, const Rng& rng);
Checkpoint make_checkpoint(const Refiner& model, const Rng& rng);
// Writes <prefix>.manifest and <prefix>.bin.
void save_checkpoint(const std::string& prefix, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& prefix);
std::unique_ptr<FirstPassModel> first_pass_from_checkpoint(const Checkpoint& ckpt);
std::unique_ptr<Refiner> refiner_from_checkpoint(const Checkpoint& ckpt);

std::string to_json(const FirstPassConfig& c);
std::string to_json(const RefineConfig& c);
FirstPassConfig first_pass_config_from_json(const std::string& text);
RefineConfig refine_config_from_json(const std::string& text);

// Hash of every parameter value, bit-exact.
std::uint64_t params_hash(const ParamStore& store);
void copy_values(const ParamStore& from, ParamStore& to);

// ------------------------------------------------------------ metrics

struct MetricsRow {
  long step = 0;
  std::string split;
  double loss = 0.0;
  double wer_first = 0.0;
  std::vector<double> wer_steps;  // one per refinement step
  long skips = 0;
  double wall_s = 0.0;
};

std::string metrics_header(int refine_steps);
std::string format_metrics_row(const MetricsRow& row, int refine_steps);

class MetricsWriter {
 public:
  MetricsWriter(std::ostream* os, int refine_steps);
  void write(const MetricsRow& row);

 private:
  std::ostream* os_;
  int refine_steps_;
};

// ------------------------------------------------------------ training

using Logger = std::function<void(const std::string&)>;

struct FirstPassResult {
  std::unique_ptr<FirstPassModel> model;
  std::vector<MetricsRow> history;
  long steps_run = 0;
  double best_dev_loss = 0.0;
};

FirstPassResult train_first_pass(const ExperimentConfig& cfg, const std::vector<Utterance>& train,
                                 const std::vector<Utterance>& dev, MetricsWriter* metrics = nullptr,
                                 const Logger& log = {});

struct RefinerResult {
  std::unique_ptr<Refiner> model;
  std::vector<MetricsRow> history;
  long steps_run = 0;
  long skipped_samples = 0;
  double best_dev_loss = 0.0;
};

// The first-pass model is only read; its parameters are hashed before and
// after and a RuntimeFailure is raised if they changed.
RefinerResult train_refiner(const ExperimentConfig& cfg, const FirstPassModel& first_pass,
                            const std::vector<Utterance>& train, const std::vector<Utterance>& dev,
                            MetricsWriter* metrics = nullptr, const Logger& log = {});

// ------------------------------------------------------------ evaluation

struct UtteranceDecode {
  LabelSequence first_pass;
  Alignment first_alignment;
  std::vector<LabelSequence> per_step;
  std::vector<Alignment> step_alignments;
  double first_pass_loss = 0.0;  // transducer NLL of the reference
  // Mean CTC loss of the reference over the first min(S, R) steps whose
  // loss is finite; ctc_feasible is false when none is.
  double step_ctc_mean = 0.0;
  bool ctc_feasible = true;
};

UtteranceDecode decode_utterance(const FirstPassModel& fp, const Refiner* refiner, const Utterance& utt,
                                 int steps, int beam, int max_emit);

// Pure function of its inputs. When refiner is null only the first-pass WER
// is reported and loss is the transducer loss; otherwise loss is the
// refiner's CTC objective. threads <= 0 reads AR_THREADS (default 1).
MetricsRow evaluate(const FirstPassModel& fp, const Refiner* refiner, const std::vector<Utterance>& corpus,
                    int steps, int beam, const std::string& split, int threads = 0);

int worker_threads_from_env();

// ------------------------------------------------------------ ablation

struct AblationGrid {
  std::vector<int> layers;
  std::vector<int> train_steps;
  std::vector<int> cascade_layers;
  std::vector<double> mask_prob;
  std::vector<int> beam;

  static AblationGrid from_yaml_text(const std::string& text);
  std::size_t size() const;
};

struct GridPoint {
  int layers;
  int train_steps;
  int cascade_layers;
  double mask_prob;
  int beam;
  std::string key() const;
};

std::vector<GridPoint> expand_grid(const AblationGrid& grid);
std::string ablation_header(int refine_steps);

// Trains and evaluates every grid point missing from out_csv (resumable),
// appending one row per point. Returns the number of rows computed.
using GridRunner = std::function<MetricsRow(const ExperimentConfig&)>;
int run_ablation_grid(const ExperimentConfig& base, const AblationGrid& grid, const std::string& out_csv,
                      const GridRunner& runner, const Logger& log = {});

}  // namespace arf

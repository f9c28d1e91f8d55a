// arf: command-line driver for data generation, training, decoding,
// evaluation, ablations and self-checks.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "arf/check.h"
#include "arf/harness.h"
#include "arf/report.h"
#include "arf/verify.h"
#include "svg_plot.h"

namespace fs = std::filesystem;
using namespace arf;

namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool record_wall_time = false;
};

void add_config_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "YAML experiment config (defaults if omitted)")->check(CLI::ExistingFile);
  c.seed_opt = cmd->add_option("--seed", c.seed, "master seed; overrides the config");
  cmd->add_flag("--record-wall-time", c.record_wall_time, "fill the wall_s metrics column");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig::defaults() : ExperimentConfig::load(c.config_path);
  if (c.seed_opt && c.seed_opt->count()) cfg.seed = c.seed;
  if (c.record_wall_time) cfg.record_wall_time = true;
  return cfg;
}

std::string corpus_path(const std::string& dir, const std::string& split) {
  return (fs::path(dir) / (split + ".tsv")).string();
}

std::vector<Utterance> load_split(const std::string& dir, const std::string& split, TaskSpec* spec = nullptr) {
  parse_split(split);
  const std::string path = corpus_path(dir, split);
  if (!fs::exists(path)) throw ValidationError("corpus file not found: " + path + " (run gen-data first)");
  return load_corpus(path, spec);
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path);
  return os;
}

void plot_history(const std::string& path, const std::string& title, const std::vector<MetricsRow>& history) {
  tools::Series first{"first pass", {}, {}};
  std::vector<tools::Series> steps;
  for (const auto& row : history) {
    first.x.push_back(row.step);
    first.y.push_back(row.wer_first);
    for (std::size_t i = 0; i < row.wer_steps.size(); ++i) {
      if (steps.size() <= i) steps.push_back({"step " + std::to_string(i + 1), {}, {}});
      steps[i].x.push_back(row.step);
      steps[i].y.push_back(row.wer_steps[i]);
    }
  }
  std::vector<tools::Series> all{first};
  all.insert(all.end(), steps.begin(), steps.end());
  tools::write_text_file(path, tools::line_chart(title, "training step", "dev WER (%)", all));
}

void plot_row(const std::string& path, const MetricsRow& row) {
  tools::Series s{row.split, {0.0}, {row.wer_first}};
  for (std::size_t i = 0; i < row.wer_steps.size(); ++i) {
    s.x.push_back(static_cast<double>(i + 1));
    s.y.push_back(row.wer_steps[i]);
  }
  tools::write_text_file(path, tools::line_chart("WER by refinement step", "step (0 = first pass)", "WER (%)", {s}));
}

// ------------------------------------------------------------ gen-data

struct GenData {
  std::string spec = "default";
  std::string out;
  std::uint64_t seed = 7;
  int train = -1, dev = -1, test = -1;
};

int run_gen_data(const GenData& o) {
  TaskSpec spec = resolve_task(o.spec);
  if (o.train >= 0) spec.train_size = o.train;
  if (o.dev >= 0) spec.dev_size = o.dev;
  if (o.test >= 0) spec.test_size = o.test;
  spec.build();
  fs::create_directories(o.out);
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    const int n = s == Split::kTrain ? spec.train_size : s == Split::kDev ? spec.dev_size : spec.test_size;
    const auto corpus = generate_corpus(spec, s, n, o.seed);
    save_corpus(corpus_path(o.out, split_name(s)), spec, corpus);
    std::cout << split_name(s) << ' ' << n << " utterances corpus_hash " << hex64(corpus_hash(corpus)) << '\n';
  }
  return 0;
}

// ------------------------------------------------------------ training

struct TrainCmd {
  Common common;
  std::string data = "data";
  std::string first;  // first-pass checkpoint (train-refiner only)
  std::string out;
  std::string metrics;
  std::string plot;
  long max_steps = 0;
};

int run_train_first_pass(const TrainCmd& o) {
  ExperimentConfig cfg = load_config(o.common);
  if (o.max_steps > 0) cfg.first_train.max_steps = o.max_steps;
  TaskSpec spec;
  const auto train = load_split(o.data, "train", &spec);
  const auto dev = load_split(o.data, "dev");
  cfg.bind_task(spec);
  cfg.validate();
  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
  std::ofstream csv = open_out(metrics_path);
  MetricsWriter writer(&csv, 0);
  FirstPassResult res = train_first_pass(cfg, train, dev, &writer, log_line);
  save_checkpoint(o.out, make_checkpoint(*res.model, Rng(cfg.seed).split("first_pass_train").split(res.steps_run)));
  if (!o.plot.empty()) plot_history(o.plot, "first pass", res.history);
  std::cout << "first pass: " << res.steps_run << " steps, best dev loss " << res.best_dev_loss << ", checkpoint "
            << o.out << '\n';
  return 0;
}

int run_train_refiner(const TrainCmd& o) {
  ExperimentConfig cfg = load_config(o.common);
  if (o.max_steps > 0) cfg.refiner_train.max_steps = o.max_steps;
  TaskSpec spec;
  const auto train = load_split(o.data, "train", &spec);
  const auto dev = load_split(o.data, "dev");
  const auto fp = first_pass_from_checkpoint(load_checkpoint(o.first));
  cfg.first_pass = fp->config();
  cfg.bind_task(spec);
  cfg.validate();
  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.csv" : o.metrics;
  std::ofstream csv = open_out(metrics_path);
  MetricsWriter writer(&csv, cfg.refiner.infer_steps);
  RefinerResult res = train_refiner(cfg, *fp, train, dev, &writer, log_line);
  save_checkpoint(o.out, make_checkpoint(*res.model, Rng(cfg.seed).split("refiner_train").split(res.steps_run)));
  if (!o.plot.empty()) plot_history(o.plot, "refiner", res.history);
  std::cout << "refiner: " << res.steps_run << " steps, best dev loss " << res.best_dev_loss << ", skipped "
            << res.skipped_samples << " samples, checkpoint " << o.out << '\n';
  return 0;
}

// ------------------------------------------------------------ decode / evaluate

struct EvalCmd {
  std::string first;
  std::string refiner;
  std::string data = "data";
  std::string split = "dev";
  int steps = 4;
  int beam = 1;
  std::string utt;
  int limit = 5;
  std::string out;
  std::string plot;
};

int run_decode(const EvalCmd& o) {
  const auto fp = first_pass_from_checkpoint(load_checkpoint(o.first));
  std::unique_ptr<Refiner> rf;
  if (!o.refiner.empty()) rf = refiner_from_checkpoint(load_checkpoint(o.refiner));
  const auto corpus = load_split(o.data, o.split);
  std::vector<const Utterance*> chosen;
  for (const auto& u : corpus) {
    if (o.utt.empty() ? static_cast<int>(chosen.size()) < o.limit : u.id == o.utt) chosen.push_back(&u);
  }
  if (chosen.empty()) throw ValidationError("decode: utterance '" + o.utt + "' not in " + o.split);
  for (const Utterance* u : chosen) {
    const UtteranceDecode d = decode_utterance(*fp, rf.get(), *u, o.steps, o.beam, fp->config().max_emit_per_frame);
    std::vector<ReportLine> lines{{"first-pass", d.first_pass, d.first_alignment}};
    for (std::size_t i = 0; i < d.per_step.size(); ++i) {
      lines.push_back({"step " + std::to_string(i + 1), d.per_step[i], d.step_alignments[i]});
    }
    std::cout << decode_report(u->id, u->target, lines, fp->vocab()) << '\n';
  }
  return 0;
}

int run_evaluate(const EvalCmd& o) {
  const auto fp = first_pass_from_checkpoint(load_checkpoint(o.first));
  std::unique_ptr<Refiner> rf;
  if (!o.refiner.empty()) rf = refiner_from_checkpoint(load_checkpoint(o.refiner));
  const auto corpus = load_split(o.data, o.split);
  const MetricsRow row = evaluate(*fp, rf.get(), corpus, rf ? o.steps : 0, o.beam, o.split);
  const int r = rf ? o.steps : 0;
  std::ostringstream text;
  text << metrics_header(r) << '\n' << format_metrics_row(row, r) << '\n';
  std::cout << text.str();
  if (!o.out.empty()) tools::write_text_file(o.out, text.str());
  if (!o.plot.empty()) plot_row(o.plot, row);
  return 0;
}

// ------------------------------------------------------------ ablate

struct AblateCmd {
  Common common;
  std::string grid;
  std::string data = "data";
  std::string first;
  std::string out = "ablation.csv";
  std::string split = "dev";
};

int run_ablate(const AblateCmd& o) {
  ExperimentConfig base = load_config(o.common);
  std::ifstream gs(o.grid);
  if (!gs) throw ValidationError("ablate: cannot open grid " + o.grid);
  std::stringstream text;
  text << gs.rdbuf();
  const AblationGrid grid = AblationGrid::from_yaml_text(text.str());
  TaskSpec spec;
  const auto train = load_split(o.data, "train", &spec);
  const auto dev = load_split(o.data, "dev");
  const auto evalset = load_split(o.data, o.split);
  const auto fp = first_pass_from_checkpoint(load_checkpoint(o.first));
  base.first_pass = fp->config();
  base.bind_task(spec);
  base.validate();
  auto runner = [&](const ExperimentConfig& cfg) {
    RefinerResult res = train_refiner(cfg, *fp, train, dev, nullptr, log_line);
    return evaluate(*fp, res.model.get(), evalset, cfg.refiner.infer_steps, cfg.beam_size, o.split);
  };
  const int n = run_ablation_grid(base, grid, o.out, runner, log_line);
  std::cout << "ablation: " << n << " new rows in " << o.out << '\n';
  return 0;
}

// ------------------------------------------------------------ verify

int run_verify(const std::string& suite, std::uint64_t seed) {
  std::vector<std::string> names = suite == "all" ? suite_names() : std::vector<std::string>{suite};
  bool ok = true;
  for (const auto& name : names) {
    const SuiteResult r = run_suite(name, seed);
    for (const auto& c : r.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << r.suite << ": " << c.name << ": " << c.detail << '\n';
    }
    ok &= r.passed();
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Align-refine deliberation on a synthetic transduction task"};
  app.require_subcommand(1);

  GenData gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate train/dev/test corpora");
  gen_cmd->add_option("--spec", gen.spec, "'default' or a task-spec JSON file");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "master corpus seed");
  gen_cmd->add_option("--train-size", gen.train, "override the train split size");
  gen_cmd->add_option("--dev-size", gen.dev, "override the dev split size");
  gen_cmd->add_option("--test-size", gen.test, "override the test split size");

  TrainCmd tfp;
  auto* tfp_cmd = app.add_subcommand("train-first-pass", "train the streaming transducer");
  add_config_flags(tfp_cmd, tfp.common);
  tfp_cmd->add_option("--data", tfp.data, "corpus directory");
  tfp_cmd->add_option("--out", tfp.out, "checkpoint prefix")->required();
  tfp_cmd->add_option("--metrics", tfp.metrics, "metrics CSV (default <out>.metrics.csv)");
  tfp_cmd->add_option("--plot", tfp.plot, "write an SVG of dev WER against training step");
  tfp_cmd->add_option("--max-steps", tfp.max_steps, "override first_train.max_steps");

  TrainCmd trf;
  auto* trf_cmd = app.add_subcommand("train-refiner", "train the refiner on a frozen first pass");
  add_config_flags(trf_cmd, trf.common);
  trf_cmd->add_option("--data", trf.data, "corpus directory");
  trf_cmd->add_option("--first", trf.first, "first-pass checkpoint prefix")->required();
  trf_cmd->add_option("--out", trf.out, "checkpoint prefix")->required();
  trf_cmd->add_option("--metrics", trf.metrics, "metrics CSV (default <out>.metrics.csv)");
  trf_cmd->add_option("--plot", trf.plot, "write an SVG of dev WER against training step");
  trf_cmd->add_option("--max-steps", trf.max_steps, "override refiner_train.max_steps");

  EvalCmd dec;
  auto* dec_cmd = app.add_subcommand("decode", "print decode reports for a few utterances");
  dec_cmd->add_option("--first", dec.first, "first-pass checkpoint prefix")->required();
  dec_cmd->add_option("--refiner", dec.refiner, "refiner checkpoint prefix");
  dec_cmd->add_option("--data", dec.data, "corpus directory");
  dec_cmd->add_option("--split", dec.split, "train, dev or test");
  dec_cmd->add_option("--steps", dec.steps, "refinement steps R")->check(CLI::Range(1, 64));
  dec_cmd->add_option("--beam", dec.beam, "first-pass beam size")->check(CLI::Range(1, 64));
  dec_cmd->add_option("--utt", dec.utt, "utterance id, e.g. id42");
  dec_cmd->add_option("--limit", dec.limit, "number of utterances when --utt is absent");

  EvalCmd ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "WER of the first pass and each refinement step");
  ev_cmd->add_option("--first", ev.first, "first-pass checkpoint prefix")->required();
  ev_cmd->add_option("--refiner", ev.refiner, "refiner checkpoint prefix");
  ev_cmd->add_option("--data", ev.data, "corpus directory");
  ev_cmd->add_option("--split", ev.split, "train, dev or test");
  ev_cmd->add_option("--steps", ev.steps, "refinement steps R")->check(CLI::Range(1, 64));
  ev_cmd->add_option("--beam", ev.beam, "first-pass beam size")->check(CLI::Range(1, 64));
  ev_cmd->add_option("--out", ev.out, "also write the CSV row here");
  ev_cmd->add_option("--plot", ev.plot, "write an SVG of WER against refinement step");

  AblateCmd ab;
  auto* ab_cmd = app.add_subcommand("ablate", "train and evaluate a grid of refiner configurations");
  add_config_flags(ab_cmd, ab.common);
  ab_cmd->add_option("--grid", ab.grid, "YAML grid of knob lists")->required();
  ab_cmd->add_option("--data", ab.data, "corpus directory");
  ab_cmd->add_option("--first", ab.first, "first-pass checkpoint prefix")->required();
  ab_cmd->add_option("--out", ab.out, "results CSV; existing rows are kept");
  ab_cmd->add_option("--split", ab.split, "split to evaluate on");

  std::string suite = "all";
  std::uint64_t verify_seed = 7;
  auto* ver_cmd = app.add_subcommand("verify", "run oracle, gradient and structure self-checks");
  ver_cmd->add_option("--suite", suite, "ctc-oracle, rnnt-oracle, gradients, structure or all");
  ver_cmd->add_option("--seed", verify_seed, "seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*tfp_cmd) return run_train_first_pass(tfp);
    if (*trf_cmd) return run_train_refiner(trf);
    if (*dec_cmd) return run_decode(dec);
    if (*ev_cmd) return run_evaluate(ev);
    if (*ab_cmd) return run_ablate(ab);
    if (*ver_cmd) return run_verify(suite, verify_seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include "arf/harness.h"
#include "json.hpp"

namespace arf {

namespace {

using FieldPtr = std::variant<int*, long*, double*, bool*, std::string*, std::uint64_t*>;

std::vector<std::pair<std::string, FieldPtr>> train_fields(const std::string& p, TrainOptions& t) {
  return {
      {p + ".lr", &t.lr},
      {p + ".beta1", &t.beta1},
      {p + ".beta2", &t.beta2},
      {p + ".eps", &t.eps},
      {p + ".clip_norm", &t.clip_norm},
      {p + ".warmup_steps", &t.warmup_steps},
      {p + ".max_steps", &t.max_steps},
      {p + ".batch_size", &t.batch_size},
      {p + ".eval_interval", &t.eval_interval},
      {p + ".patience", &t.patience},
      {p + ".spec_augment", &t.spec_augment},
  };
}

// Every user-settable key, in emission order.
std::vector<std::pair<std::string, FieldPtr>> fields(ExperimentConfig& c) {
  std::vector<std::pair<std::string, FieldPtr>> f = {
      {"seed", &c.seed},
      {"task", &c.task},
      {"data_dir", &c.data_dir},
      {"beam_size", &c.beam_size},
      {"record_wall_time", &c.record_wall_time},
      {"first_pass.model_dim", &c.first_pass.model_dim},
      {"first_pass.layers", &c.first_pass.layers},
      {"first_pass.heads", &c.first_pass.heads},
      {"first_pass.ff_hidden", &c.first_pass.ff_hidden},
      {"first_pass.joint_dim", &c.first_pass.joint_dim},
      {"first_pass.max_emit_per_frame", &c.first_pass.max_emit_per_frame},
      {"refiner.model_dim", &c.refiner.model_dim},
      {"refiner.layers", &c.refiner.layers},
      {"refiner.cascade_layers", &c.refiner.cascade_layers},
      {"refiner.heads", &c.refiner.heads},
      {"refiner.ff_hidden", &c.refiner.ff_hidden},
      {"refiner.right_context", &c.refiner.right_context},
      {"refiner.train_steps", &c.refiner.train_steps},
      {"refiner.infer_steps", &c.refiner.infer_steps},
      {"refiner.mask_prob", &c.refiner.mask_prob},
      {"refiner.dropout", &c.refiner.dropout},
      {"refiner.clean_step_inputs", &c.refiner.clean_step_inputs},
      {"spec_augment.num_time_masks", &c.spec_augment.num_time_masks},
      {"spec_augment.max_time_frac", &c.spec_augment.max_time_frac},
      {"spec_augment.num_feat_masks", &c.spec_augment.num_feat_masks},
      {"spec_augment.max_feat_frac", &c.spec_augment.max_feat_frac},
  };
  for (auto& e : train_fields("first_train", c.first_train)) f.push_back(e);
  for (auto& e : train_fields("refiner_train", c.refiner_train)) f.push_back(e);
  return f;
}

void flatten(const YAML::Node& node, const std::string& prefix, std::vector<std::pair<std::string, YAML::Node>>& out) {
  for (const auto& kv : node) {
    const std::string key = (prefix.empty() ? "" : prefix + ".") + kv.first.as<std::string>();
    if (kv.second.IsMap()) {
      flatten(kv.second, key, out);
    } else {
      out.emplace_back(key, kv.second);
    }
  }
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.first_train.lr = 3e-3;
  c.first_train.max_steps = 3000;
  c.first_train.eval_interval = 250;
  c.first_train.spec_augment = false;
  c.refiner_train.lr = 1e-3;
  c.refiner_train.max_steps = 2000;
  c.refiner_train.eval_interval = 250;
  c.refiner_train.spec_augment = true;
  return c;
}

ExperimentConfig ExperimentConfig::from_yaml_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  ExperimentConfig c = defaults();
  if (root.IsNull()) return c;
  if (!root.IsMap()) throw ValidationError("config: top level must be a mapping");
  std::vector<std::pair<std::string, YAML::Node>> entries;
  flatten(root, "", entries);
  auto table = fields(c);
  for (const auto& [key, node] : entries) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.first == key; });
    if (it == table.end()) throw ValidationError("config: unknown key '" + key + "'");
    try {
      std::visit([&](auto* ptr) { *ptr = node.as<std::remove_pointer_t<decltype(ptr)>>(); }, it->second);
    } catch (const YAML::Exception&) {
      throw ValidationError("config: bad value for '" + key + "'");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_yaml_text(ss.str());
}

std::string ExperimentConfig::to_yaml() const {
  ExperimentConfig copy = *this;
  std::ostringstream os;
  std::string section;
  for (const auto& [key, ptr] : fields(copy)) {
    const auto dot = key.find('.');
    std::string leaf = key;
    std::string indent;
    if (dot != std::string::npos) {
      const std::string sec = key.substr(0, dot);
      if (sec != section) {
        os << sec << ":\n";
        section = sec;
      }
      leaf = key.substr(dot + 1);
      indent = "  ";
    }
    os << indent << leaf << ": ";
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, double>) {
            os << format_double(*p);
          } else if constexpr (std::is_same_v<T, bool>) {
            os << (*p ? "true" : "false");
          } else if constexpr (std::is_same_v<T, std::string>) {
            os << '"' << *p << '"';
          } else {
            os << *p;
          }
        },
        ptr);
    os << '\n';
  }
  return os.str();
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ValidationError(key + ": " + why); };
  if (beam_size < 1) fail("beam_size", "must be >= 1");
  if (first_pass.model_dim < 1) fail("first_pass.model_dim", "must be >= 1");
  if (first_pass.layers < 0) fail("first_pass.layers", "must be >= 0");
  if (first_pass.heads < 1 || first_pass.model_dim % first_pass.heads != 0) {
    fail("first_pass.heads", "must divide first_pass.model_dim");
  }
  if (first_pass.ff_hidden < 1) fail("first_pass.ff_hidden", "must be >= 1");
  if (first_pass.joint_dim < 1) fail("first_pass.joint_dim", "must be >= 1");
  if (first_pass.max_emit_per_frame < 1) fail("first_pass.max_emit_per_frame", "must be >= 1");
  try {
    refiner.validate();
  } catch (const ValidationError&) {
    throw;
  }
  for (const auto& [name, t] : {std::pair<std::string, const TrainOptions*>{"first_train", &first_train},
                                {"refiner_train", &refiner_train}}) {
    if (!(t->lr > 0.0)) fail(name + ".lr", "must be > 0");
    if (!(t->beta1 >= 0.0 && t->beta1 < 1.0)) fail(name + ".beta1", "must be in [0, 1)");
    if (!(t->beta2 >= 0.0 && t->beta2 < 1.0)) fail(name + ".beta2", "must be in [0, 1)");
    if (!(t->eps > 0.0)) fail(name + ".eps", "must be > 0");
    if (!(t->clip_norm > 0.0)) fail(name + ".clip_norm", "must be > 0");
    if (t->warmup_steps < 0) fail(name + ".warmup_steps", "must be >= 0");
    if (t->max_steps < 1) fail(name + ".max_steps", "must be >= 1");
    if (t->batch_size < 1) fail(name + ".batch_size", "must be >= 1");
    if (t->eval_interval < 1) fail(name + ".eval_interval", "must be >= 1");
    if (t->patience < 1) fail(name + ".patience", "must be >= 1");
  }
  if (spec_augment.num_time_masks < 0) fail("spec_augment.num_time_masks", "must be >= 0");
  if (spec_augment.num_feat_masks < 0) fail("spec_augment.num_feat_masks", "must be >= 0");
  if (!(spec_augment.max_time_frac >= 0.0 && spec_augment.max_time_frac <= 1.0)) {
    fail("spec_augment.max_time_frac", "must be in [0, 1]");
  }
  if (!(spec_augment.max_feat_frac >= 0.0 && spec_augment.max_feat_frac <= 1.0)) {
    fail("spec_augment.max_feat_frac", "must be in [0, 1]");
  }
}

void ExperimentConfig::bind_task(const TaskSpec& spec) {
  first_pass.num_labels = spec.num_labels;
  first_pass.input_dim = spec.feature_dim;
  refiner.num_labels = spec.num_labels;
  refiner.audio_dim = first_pass.model_dim;
}

TaskSpec resolve_task(const std::string& task) {
  if (task == "default") return TaskSpec::make_default();
  std::ifstream is(task);
  if (!is) throw ValidationError("task: cannot open task spec '" + task + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return TaskSpec::from_json(ss.str());
}

std::string to_json(const FirstPassConfig& c) {
  nlohmann::json j;
  j["num_labels"] = c.num_labels;
  j["input_dim"] = c.input_dim;
  j["model_dim"] = c.model_dim;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["ff_hidden"] = c.ff_hidden;
  j["joint_dim"] = c.joint_dim;
  j["max_emit_per_frame"] = c.max_emit_per_frame;
  return j.dump();
}

std::string to_json(const RefineConfig& c) {
  nlohmann::json j;
  j["num_labels"] = c.num_labels;
  j["audio_dim"] = c.audio_dim;
  j["model_dim"] = c.model_dim;
  j["layers"] = c.layers;
  j["cascade_layers"] = c.cascade_layers;
  j["heads"] = c.heads;
  j["ff_hidden"] = c.ff_hidden;
  j["right_context"] = c.right_context;
  j["train_steps"] = c.train_steps;
  j["infer_steps"] = c.infer_steps;
  j["mask_prob"] = c.mask_prob;
  j["dropout"] = c.dropout;
  j["clean_step_inputs"] = c.clean_step_inputs;
  return j.dump();
}

FirstPassConfig first_pass_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  FirstPassConfig c;
  c.num_labels = j.at("num_labels");
  c.input_dim = j.at("input_dim");
  c.model_dim = j.at("model_dim");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.ff_hidden = j.at("ff_hidden");
  c.joint_dim = j.at("joint_dim");
  c.max_emit_per_frame = j.at("max_emit_per_frame");
  return c;
}

RefineConfig refine_config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RefineConfig c;
  c.num_labels = j.at("num_labels");
  c.audio_dim = j.at("audio_dim");
  c.model_dim = j.at("model_dim");
  c.layers = j.at("layers");
  c.cascade_layers = j.at("cascade_layers");
  c.heads = j.at("heads");
  c.ff_hidden = j.at("ff_hidden");
  c.right_context = j.at("right_context");
  c.train_steps = j.at("train_steps");
  c.infer_steps = j.at("infer_steps");
  c.mask_prob = j.at("mask_prob");
  c.dropout = j.at("dropout");
  c.clean_step_inputs = j.at("clean_step_inputs");
  return c;
}

}  // namespace arf

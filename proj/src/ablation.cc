#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "arf/check.h"
#include "arf/harness.h"

namespace arf {

namespace {

template <typename T>
std::vector<T> read_list(const YAML::Node& node, const std::string& key) {
  std::vector<T> out;
  try {
    if (node.IsSequence()) {
      for (const auto& v : node) out.push_back(v.as<T>());
    } else {
      out.push_back(node.as<T>());
    }
  } catch (const YAML::Exception&) {
    throw ValidationError("grid: bad value for '" + key + "'");
  }
  if (out.empty()) throw ValidationError("grid: '" + key + "' is empty");
  return out;
}

std::string short_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

AblationGrid AblationGrid::from_yaml_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("grid: ") + e.what());
  }
  if (!root.IsMap()) throw ValidationError("grid: top level must be a mapping");
  AblationGrid g{{4}, {3}, {0}, {0.0}, {1}};
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    if (key == "layers") {
      g.layers = read_list<int>(kv.second, key);
    } else if (key == "train_steps") {
      g.train_steps = read_list<int>(kv.second, key);
    } else if (key == "cascade_layers") {
      g.cascade_layers = read_list<int>(kv.second, key);
    } else if (key == "mask_prob") {
      g.mask_prob = read_list<double>(kv.second, key);
    } else if (key == "beam") {
      g.beam = read_list<int>(kv.second, key);
    } else {
      throw ValidationError("grid: unknown key '" + key + "'");
    }
  }
  return g;
}

std::size_t AblationGrid::size() const {
  return layers.size() * train_steps.size() * cascade_layers.size() * mask_prob.size() * beam.size();
}

std::string GridPoint::key() const {
  return "L" + std::to_string(layers) + "_S" + std::to_string(train_steps) + "_C" + std::to_string(cascade_layers) +
         "_p" + short_double(mask_prob) + "_b" + std::to_string(beam);
}

std::vector<GridPoint> expand_grid(const AblationGrid& grid) {
  std::vector<GridPoint> out;
  for (int l : grid.layers)
    for (int s : grid.train_steps)
      for (int c : grid.cascade_layers)
        for (double p : grid.mask_prob)
          for (int b : grid.beam) out.push_back(GridPoint{l, s, c, p, b});
  return out;
}

std::string ablation_header(int refine_steps) {
  return "key,layers,train_steps,cascade_layers,mask_prob,beam," + metrics_header(refine_steps);
}

int run_ablation_grid(const ExperimentConfig& base, const AblationGrid& grid, const std::string& out_csv,
                      const GridRunner& runner, const Logger& log) {
  const int r = base.refiner.infer_steps;
  const std::string header = ablation_header(r);
  std::set<std::string> done;
  bool need_header = true;
  if (std::filesystem::exists(out_csv)) {
    std::ifstream is(out_csv);
    std::string line;
    if (std::getline(is, line)) {
      if (line != header) throw ValidationError("ablation: " + out_csv + " has a different header; refusing to append");
      need_header = false;
      while (std::getline(is, line)) {
        if (!line.empty()) done.insert(line.substr(0, line.find(',')));
      }
    }
  }
  std::ofstream os(out_csv, std::ios::app);
  if (!os) throw RuntimeFailure("ablation: cannot write " + out_csv);
  if (need_header) os << header << '\n' << std::flush;

  int computed = 0;
  for (const GridPoint& pt : expand_grid(grid)) {
    const std::string key = pt.key();
    if (done.count(key)) {
      if (log) log("ablation: " + key + " already done");
      continue;
    }
    ExperimentConfig cfg = base;
    cfg.refiner.layers = pt.layers;
    cfg.refiner.train_steps = pt.train_steps;
    cfg.refiner.cascade_layers = pt.cascade_layers;
    cfg.refiner.mask_prob = pt.mask_prob;
    cfg.beam_size = pt.beam;
    cfg.validate();
    if (log) log("ablation: running " + key);
    const MetricsRow row = runner(cfg);
    os << key << ',' << pt.layers << ',' << pt.train_steps << ',' << pt.cascade_layers << ','
       << short_double(pt.mask_prob) << ',' << pt.beam << ',' << format_metrics_row(row, r) << '\n'
       << std::flush;
    ++computed;
  }
  return computed;
}

}  // namespace arf

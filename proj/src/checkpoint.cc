#include <cstring>
#include <fstream>
#include <sstream>

#include "arf/check.h"
#include "arf/harness.h"

namespace arf {

namespace {

constexpr const char* kMagic = "arf-checkpoint v1";

Checkpoint snapshot(const ParamStore& store, std::string kind, std::string config, const Rng& rng) {
  Checkpoint c;
  c.kind = std::move(kind);
  c.config = std::move(config);
  c.rng_key = rng.key();
  c.rng_counter = rng.counter();
  for (const Parameter* p : store.all()) c.params.emplace_back(p->name, p->value);
  return c;
}

void restore(const Checkpoint& ckpt, ParamStore& store) {
  if (ckpt.params.size() != store.size()) {
    throw ValidationError("checkpoint: expected " + std::to_string(store.size()) + " tensors, found " +
                          std::to_string(ckpt.params.size()));
  }
  for (const auto& [name, value] : ckpt.params) {
    if (!store.contains(name)) throw ValidationError("checkpoint: unexpected tensor '" + name + "'");
    Parameter& p = store.get(name);
    if (!same_shape(p.value, value)) throw ValidationError("checkpoint: shape mismatch for '" + name + "'");
    p.value = value;
  }
}

}  // namespace

Checkpoint make_checkpoint(const FirstPassModel& model, const Rng& rng) {
  return snapshot(model.params(), "first_pass", to_json(model.config()), rng);
}

Checkpoint make_checkpoint(const Refiner& model, const Rng& rng) {
  return snapshot(model.params(), "refiner", to_json(model.config()), rng);
}

void save_checkpoint(const std::string& prefix, const Checkpoint& ckpt) {
  std::ofstream man(prefix + ".manifest", std::ios::binary);
  std::ofstream bin(prefix + ".bin", std::ios::binary);
  if (!man || !bin) throw RuntimeFailure("checkpoint: cannot write " + prefix);
  man << kMagic << '\n';
  man << "kind " << ckpt.kind << '\n';
  man << "config " << ckpt.config << '\n';
  man << "rng " << ckpt.rng_key << ' ' << ckpt.rng_counter << '\n';
  man << "tensors " << ckpt.params.size() << '\n';
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.params) {
    man << name << ' ' << t.rows() << ' ' << t.cols() << ' ' << offset << '\n';
    bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    offset += t.size();
  }
  if (!man || !bin) throw RuntimeFailure("checkpoint: write failed for " + prefix);
}

Checkpoint load_checkpoint(const std::string& prefix) {
  std::ifstream man(prefix + ".manifest", std::ios::binary);
  std::ifstream bin(prefix + ".bin", std::ios::binary);
  if (!man || !bin) throw ValidationError("checkpoint: cannot open " + prefix + ".{manifest,bin}");
  auto bad = [&](const std::string& why) { return ValidationError("checkpoint " + prefix + ": " + why); };

  std::string line;
  if (!std::getline(man, line) || line != kMagic) throw bad("not a checkpoint manifest");
  Checkpoint c;
  std::string word;
  if (!(man >> word >> c.kind) || word != "kind") throw bad("missing kind");
  man >> word;
  if (word != "config") throw bad("missing config");
  man.get();
  std::getline(man, c.config);
  std::size_t count = 0;
  if (!(man >> word >> c.rng_key >> c.rng_counter) || word != "rng") throw bad("missing rng state");
  if (!(man >> word >> count) || word != "tensors") throw bad("missing tensor count");

  std::vector<double> data;
  {
    std::stringstream ss;
    ss << bin.rdbuf();
    const std::string raw = ss.str();
    if (raw.size() % sizeof(double) != 0) throw bad("truncated .bin");
    data.resize(raw.size() / sizeof(double));
    std::memcpy(data.data(), raw.data(), raw.size());
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name;
    int rows = 0, cols = 0;
    std::size_t offset = 0;
    if (!(man >> name >> rows >> cols >> offset)) throw bad("truncated tensor table");
    if (rows < 0 || cols < 0 || offset != expected_offset) throw bad("bad entry for " + name);
    const std::size_t n = static_cast<std::size_t>(rows) * cols;
    if (offset + n > data.size()) throw bad("tensor " + name + " runs past the end of .bin");
    c.params.emplace_back(name, Tensor({rows, cols}, std::vector<double>(data.begin() + offset,
                                                                          data.begin() + offset + n)));
    expected_offset += n;
  }
  if (expected_offset != data.size()) throw bad("trailing data in .bin");
  return c;
}

std::unique_ptr<FirstPassModel> first_pass_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "first_pass") throw ValidationError("checkpoint: expected a first_pass model, got " + ckpt.kind);
  auto model = std::make_unique<FirstPassModel>(first_pass_config_from_json(ckpt.config), 0);
  restore(ckpt, model->params());
  return model;
}

std::unique_ptr<Refiner> refiner_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "refiner") throw ValidationError("checkpoint: expected a refiner model, got " + ckpt.kind);
  RefineConfig cfg = refine_config_from_json(ckpt.config);
  cfg.validate();
  auto model = std::make_unique<Refiner>(cfg, 0);
  restore(ckpt, model->params());
  return model;
}

std::uint64_t params_hash(const ParamStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : store.all()) {
    h = hash_combine(h, hash_string(p->name));
    for (double v : std::span<const double>(p->value.data(), p->value.size())) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = hash_combine(h, bits);
    }
  }
  return h;
}

void copy_values(const ParamStore& from, ParamStore& to) {
  for (const Parameter* p : from.all()) {
    Parameter& dst = to.get(p->name);
    ARF_CHECK(same_shape(dst.value, p->value), "shape mismatch copying " << p->name);
    dst.value = p->value;
  }
}

}  // namespace arf

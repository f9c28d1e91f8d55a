#include "arf/synthdata.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "arf/rng.h"
#include "json.hpp"

namespace arf {

static_assert(std::endian::native == std::endian::little, "corpus files assume a little-endian host");

TaskSpec TaskSpec::make_default() {
  TaskSpec spec;
  spec.build();
  return spec;
}

void TaskSpec::build() {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ValidationError("task." + key + ": " + why);
  };
  if (num_labels < 4 || num_labels % 2 != 0) fail("num_labels", "must be even and >= 4");
  if (num_pairs() > feature_dim) fail("feature_dim", "must be >= number of label pairs");
  if (confusion < 0.0 || confusion >= pair_spread * std::sqrt(2.0) / 4.0) {
    fail("confusion", "must be in [0, pair_spread*sqrt(2)/4) so pairs stay separated");
  }
  if (noise < 0.0) fail("noise", "must be >= 0");
  if (min_duration < 1 || max_duration < min_duration) fail("min_duration", "need 1 <= min <= max");
  if (min_length < 1 || max_length < min_length) fail("min_length", "need 1 <= min <= max");
  if (successor_pairs < 1 || 2 * successor_pairs > num_pairs() - 1) {
    fail("successor_pairs", "two members need disjoint successor sets drawn from the other pairs");
  }
  if (!(grammar_leak >= 0.0 && grammar_leak < 1.0)) fail("grammar_leak", "must be in [0, 1)");
  if (train_size < 0 || dev_size < 0 || test_size < 0) fail("train_size", "sizes must be >= 0");

  const int v = num_labels;
  const int pairs = num_pairs();
  prototypes.assign(v + 1, std::vector<double>(feature_dim, 0.0));
  for (int label = 1; label <= v; ++label) {
    const int pair = pair_of(label);
    const double sign = (label - 1) % 2 == 0 ? -1.0 : 1.0;
    prototypes[label][pair] = pair_spread;
    prototypes[label][(pair + 1) % feature_dim] += sign * confusion;
  }

  Rng rng = Rng(task_seed).split("bigram");
  bigram.assign(v + 1, std::vector<double>(v + 1, 0.0));
  for (int label = 1; label <= v; ++label) bigram[0][label] = 1.0 / v;
  for (int pair = 0; pair < pairs; ++pair) {
    std::vector<int> others;
    for (int q = 0; q < pairs; ++q) {
      if (q != pair) others.push_back(q);
    }
    // Fisher-Yates on the counter-based stream.
    for (int i = static_cast<int>(others.size()) - 1; i > 0; --i) {
      std::swap(others[i], others[rng.uniform_int(0, i)]);
    }
    for (int member = 0; member < 2; ++member) {
      const int label = 2 * pair + 1 + member;
      // Leak mass goes to every label outside the own pair.
      for (int q : others) {
        bigram[label][2 * q + 1] = grammar_leak / (2.0 * others.size());
        bigram[label][2 * q + 2] = grammar_leak / (2.0 * others.size());
      }
      for (int k = 0; k < successor_pairs; ++k) {
        const int q = others[member * successor_pairs + k];
        bigram[label][2 * q + 1] += (1.0 - grammar_leak) * 0.5 / successor_pairs;
        bigram[label][2 * q + 2] += (1.0 - grammar_leak) * 0.5 / successor_pairs;
      }
    }
  }
}

std::string TaskSpec::to_json() const {
  nlohmann::json j;
  j["num_labels"] = num_labels;
  j["feature_dim"] = feature_dim;
  j["pair_spread"] = pair_spread;
  j["confusion"] = confusion;
  j["noise"] = noise;
  j["min_duration"] = min_duration;
  j["max_duration"] = max_duration;
  j["min_length"] = min_length;
  j["max_length"] = max_length;
  j["successor_pairs"] = successor_pairs;
  j["grammar_leak"] = grammar_leak;
  j["task_seed"] = task_seed;
  j["train_size"] = train_size;
  j["dev_size"] = dev_size;
  j["test_size"] = test_size;
  j["bigram"] = bigram;
  return j.dump();
}

TaskSpec TaskSpec::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("task spec: ") + e.what());
  }
  TaskSpec s;
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("num_labels", s.num_labels);
  take("feature_dim", s.feature_dim);
  take("pair_spread", s.pair_spread);
  take("confusion", s.confusion);
  take("noise", s.noise);
  take("min_duration", s.min_duration);
  take("max_duration", s.max_duration);
  take("min_length", s.min_length);
  take("max_length", s.max_length);
  take("successor_pairs", s.successor_pairs);
  take("grammar_leak", s.grammar_leak);
  take("task_seed", s.task_seed);
  take("train_size", s.train_size);
  take("dev_size", s.dev_size);
  take("test_size", s.test_size);
  s.build();
  return s;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ValidationError("split: unknown split '" + name + "' (expected train, dev or test)");
}

std::uint64_t utterance_seed(std::uint64_t master_seed, Split split, int index) {
  return hash_combine(hash_combine(master_seed, hash_string(split_name(split))),
                      static_cast<std::uint64_t>(index));
}

Utterance generate_utterance(const TaskSpec& spec, Split split, int index, std::uint64_t master_seed) {
  ARF_CHECK(!spec.bigram.empty(), "TaskSpec::build() was not called");
  Utterance utt;
  utt.id = "id" + std::to_string(index);
  utt.seed = utterance_seed(master_seed, split, index);
  Rng rng(utt.seed);

  auto draw = [&](const std::vector<double>& row) {
    double r = rng.uniform();
    for (int k = 1; k < static_cast<int>(row.size()); ++k) {
      r -= row[k];
      if (r < 0.0) return k;
    }
    // Rounding slack: fall back to the last label with mass.
    for (int k = static_cast<int>(row.size()) - 1; k >= 1; --k) {
      if (row[k] > 0.0) return k;
    }
    return 1;
  };

  const int length = rng.uniform_int(spec.min_length, spec.max_length);
  int prev = 0;
  for (int u = 0; u < length; ++u) {
    prev = draw(spec.bigram[prev]);
    utt.target.tokens.push_back(prev);
  }
  std::vector<int> durations(length);
  int frames = 0;
  for (int& d : durations) {
    d = rng.uniform_int(spec.min_duration, spec.max_duration);
    frames += d;
  }
  utt.features = Tensor({frames, spec.feature_dim});
  int t = 0;
  for (int u = 0; u < length; ++u) {
    const auto& proto = spec.prototypes[utt.target.tokens[u]];
    for (int k = 0; k < durations[u]; ++k, ++t) {
      for (int f = 0; f < spec.feature_dim; ++f) {
        utt.features.at(t, f) = proto[f] + (spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0);
      }
    }
  }
  return utt;
}

std::vector<Utterance> generate_corpus(const TaskSpec& spec, Split split, int n, std::uint64_t master_seed) {
  ARF_CHECK(n >= 1, "corpus size must be >= 1");
  std::vector<Utterance> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(generate_utterance(spec, split, i, master_seed));
  return out;
}

namespace {

struct Fnv {
  std::uint64_t h = kEmptyCorpusHash;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void value(T v) {
    bytes(&v, sizeof(v));
  }
};

}  // namespace

std::uint64_t corpus_hash(const std::vector<Utterance>& corpus) {
  Fnv f;
  for (const Utterance& u : corpus) {
    f.value<std::uint32_t>(static_cast<std::uint32_t>(u.id.size()));
    f.bytes(u.id.data(), u.id.size());
    f.value<std::uint32_t>(static_cast<std::uint32_t>(u.target.size()));
    for (int tok : u.target.tokens) f.value<std::int32_t>(tok);
    f.value<std::int32_t>(u.features.rows());
    f.value<std::int32_t>(u.features.cols());
    for (double x : u.features.values()) f.value<std::int64_t>(std::llround(x * 1e9));
  }
  return f.h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t n = bytes[i] << 16;
    if (i + 1 < bytes.size()) n |= bytes[i + 1] << 8;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw ValidationError("base64: length not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = value(c);
        if (v[k] < 0 || pad > 0) throw ValidationError("base64: invalid character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>((n >> 16) & 255));
    if (pad < 2) out.push_back(static_cast<unsigned char>((n >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<unsigned char>(n & 255));
  }
  return out;
}

void write_corpus(std::ostream& os, const TaskSpec& spec, const std::vector<Utterance>& corpus) {
  os << "#taskspec " << spec.to_json() << '\n';
  for (const Utterance& u : corpus) {
    std::vector<unsigned char> payload(8 + u.features.size() * sizeof(double));
    const std::int32_t dims[2] = {u.features.rows(), u.features.cols()};
    std::memcpy(payload.data(), dims, 8);
    std::memcpy(payload.data() + 8, u.features.data(), u.features.size() * sizeof(double));
    os << u.id << '\t' << to_text(u.target) << '\t' << base64_encode(payload) << '\n';
  }
}

void read_corpus(std::istream& is, TaskSpec& spec, std::vector<Utterance>& corpus) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("#taskspec ", 0) != 0) {
    throw ValidationError("corpus: missing '#taskspec' header line");
  }
  spec = TaskSpec::from_json(line.substr(10));
  corpus.clear();
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw ValidationError("corpus line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    Utterance u;
    u.id = line.substr(0, tab1);
    u.target = parse_labels(line.substr(tab1 + 1, tab2 - tab1 - 1));
    const std::vector<unsigned char> payload = base64_decode(line.substr(tab2 + 1));
    if (payload.size() < 8) throw ValidationError("corpus line " + std::to_string(lineno) + ": short payload");
    std::int32_t dims[2];
    std::memcpy(dims, payload.data(), 8);
    if (dims[0] < 1 || dims[1] < 1 ||
        payload.size() != 8 + static_cast<std::size_t>(dims[0]) * dims[1] * sizeof(double)) {
      throw ValidationError("corpus line " + std::to_string(lineno) + ": payload size does not match T' x F");
    }
    u.features = Tensor({dims[0], dims[1]});
    std::memcpy(u.features.data(), payload.data() + 8, u.features.size() * sizeof(double));
    corpus.push_back(std::move(u));
  }
}

void save_corpus(const std::string& path, const TaskSpec& spec, const std::vector<Utterance>& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write corpus file " + path);
  write_corpus(os, spec, corpus);
  if (!os) throw RuntimeFailure("error while writing " + path);
}

std::vector<Utterance> load_corpus(const std::string& path, TaskSpec* spec) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open corpus file " + path);
  TaskSpec s;
  std::vector<Utterance> corpus;
  read_corpus(is, s, corpus);
  if (spec) *spec = s;
  return corpus;
}

}  // namespace arf

// Deterministic synthetic transduction task. Labels come in acoustically
// confusable pairs (2i-1, 2i); a sparse bigram grammar makes the member of a
// pair predictable from the label that follows it, so only a model with
// right (textual) context can resolve the confusion.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "arf/alignkit.h"
#include "arf/tensor.h"

namespace arf {

struct TaskSpec {
  int num_labels = 16;
  int feature_dim = 8;
  double pair_spread = 1.0;  // scale of pair centres
  double confusion = 0.3;    // half distance between the members of a pair
  double noise = 0.3;        // per-dimension Gaussian sigma
  int min_duration = 2;
  int max_duration = 4;
  int min_length = 3;
  int max_length = 12;
  int successor_pairs = 2;   // pairs preferred after each label
  // Probability mass spread uniformly over all other-pair labels, so a
  // single confusion never makes the rest of the sentence ungrammatical.
  double grammar_leak = 0.2;
  std::uint64_t task_seed = 1;
  int train_size = 4000;
  int dev_size = 200;
  int test_size = 200;

  // Derived by build(): prototypes[label] (row 0 unused) and
  // bigram[prev][next] with row 0 the initial distribution.
  std::vector<std::vector<double>> prototypes;
  std::vector<std::vector<double>> bigram;

  static TaskSpec make_default();
  // Validates the parameters and fills prototypes/bigram.
  void build();
  int num_pairs() const { return num_labels / 2; }
  static int pair_of(int label) { return (label - 1) / 2; }

  std::string to_json() const;
  static TaskSpec from_json(const std::string& text);
};

enum class Split { kTrain, kDev, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Utterance {
  std::string id;
  Tensor features;  // [T' x F]
  LabelSequence target;
  std::uint64_t seed = 0;
};

std::uint64_t utterance_seed(std::uint64_t master_seed, Split split, int index);
Utterance generate_utterance(const TaskSpec& spec, Split split, int index, std::uint64_t master_seed);
std::vector<Utterance> generate_corpus(const TaskSpec& spec, Split split, int n, std::uint64_t master_seed);

// Order-sensitive 64-bit hash over ids, targets and features quantised to a
// 1e-9 grid. The empty corpus hashes to kEmptyCorpusHash.
std::uint64_t corpus_hash(const std::vector<Utterance>& corpus);
inline constexpr std::uint64_t kEmptyCorpusHash = 0xcbf29ce484222325ULL;
std::string hex64(std::uint64_t v);

// Corpus file: "#taskspec <json>" header, then per utterance
// id \t target ids \t base64(int32 T', int32 F, T'*F float64), little endian.
void write_corpus(std::ostream& os, const TaskSpec& spec, const std::vector<Utterance>& corpus);
void read_corpus(std::istream& is, TaskSpec& spec, std::vector<Utterance>& corpus);
void save_corpus(const std::string& path, const TaskSpec& spec, const std::vector<Utterance>& corpus);
std::vector<Utterance> load_corpus(const std::string& path, TaskSpec* spec = nullptr);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace arf

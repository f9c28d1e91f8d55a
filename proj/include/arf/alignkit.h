// Alignment algebra: vocabulary layout, the collapse operator, greedy
// alignment extraction, mask augmentation and Levenshtein scoring.
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "arf/rng.h"
#include "arf/tensor.h"

namespace arf {

// Ids: 0 = blank, 1..V = labels, V+1 = mask. The model output layer has V+1
// classes, so mask can be embedded but never emitted.
struct Vocab {
  int num_labels = 16;

  static constexpr int kBlank = 0;
  int mask_id() const { return num_labels + 1; }
  int output_dim() const { return num_labels + 1; }
  int embed_rows() const { return num_labels + 2; }
  bool is_label(int id) const { return id >= 1 && id <= num_labels; }
};

// Frame-level token sequence, blanks included.
struct Alignment {
  std::vector<int> tokens;
  int size() const { return static_cast<int>(tokens.size()); }
  friend bool operator==(const Alignment&, const Alignment&) = default;
};

// Blank-free, mask-free label sequence.
struct LabelSequence {
  std::vector<int> tokens;
  int size() const { return static_cast<int>(tokens.size()); }
  bool empty() const { return tokens.empty(); }
  friend bool operator==(const LabelSequence&, const LabelSequence&) = default;
};

// Merge adjacent repeats, then drop blanks. Throws on mask ids.
LabelSequence collapse(const Alignment& a, const Vocab& vocab);

// Row-wise argmax of a [T x (V+1)] score matrix, lowest id on ties.
Alignment greedy_alignment(const Tensor& scores);

// Replaces each position by the mask id with probability p.
Alignment mask_augment(const Alignment& a, double p, const Vocab& vocab, Rng& rng);

struct EditCounts {
  int subs = 0;
  int ins = 0;
  int dels = 0;
  int total() const { return subs + ins + dels; }
  EditCounts& operator+=(const EditCounts& o) {
    subs += o.subs;
    ins += o.ins;
    dels += o.dels;
    return *this;
  }
  friend bool operator==(const EditCounts&, const EditCounts&) = default;
};

enum class EditOp { kMatch, kSub, kIns, kDel };

struct EditStep {
  EditOp op;
  int ref = -1;  // index into ref, -1 for insertions
  int hyp = -1;  // index into hyp, -1 for deletions
};

// Minimal unit-cost edit script. On equal cost the backtrace prefers
// substitution (or match), then deletion, then insertion.
std::vector<EditStep> edit_script(const LabelSequence& ref, const LabelSequence& hyp);
EditCounts edit_distance(const LabelSequence& ref, const LabelSequence& hyp);

// Error rate in percent; the denominator is max(1, reference length).
double error_rate(const EditCounts& counts, long ref_tokens);

// Debug text: space separated ids, blank as "_" and mask as "?".
std::string to_text(const Alignment& a, const Vocab& vocab);
std::string to_text(const LabelSequence& s);
Alignment parse_alignment(std::string_view text, const Vocab& vocab);
LabelSequence parse_labels(std::string_view text);

}  // namespace arf

#include "arf/alignkit.h"

#include <algorithm>
#include <sstream>

namespace arf {

LabelSequence collapse(const Alignment& a, const Vocab& vocab) {
  LabelSequence out;
  int prev = -1;
  for (int tok : a.tokens) {
    ARF_CHECK(tok != vocab.mask_id(), "collapse() on an alignment containing the mask id");
    ARF_CHECK(tok >= 0 && tok <= vocab.num_labels, "token " << tok << " outside vocabulary");
    if (tok != prev && tok != Vocab::kBlank) out.tokens.push_back(tok);
    prev = tok;
  }
  return out;
}

Alignment greedy_alignment(const Tensor& scores) {
  ARF_CHECK(scores.rank() == 2 && scores.rows() >= 1, "greedy_alignment needs T >= 1 rows");
  Alignment out;
  out.tokens.resize(scores.rows());
  for (int t = 0; t < scores.rows(); ++t) {
    auto row = scores.row(t);
    // max_element returns the first maximum, i.e. the lowest id.
    out.tokens[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Alignment mask_augment(const Alignment& a, double p, const Vocab& vocab, Rng& rng) {
  ARF_CHECK(p >= 0.0 && p <= 1.0, "mask probability must be in [0, 1], got " << p);
  Alignment out = a;
  for (int& tok : out.tokens) {
    // Always draw, so the stream position depends only on the length.
    if (rng.uniform() < p) tok = vocab.mask_id();
  }
  return out;
}

std::vector<EditStep> edit_script(const LabelSequence& ref, const LabelSequence& hyp) {
  const int n = ref.size();
  const int m = hyp.size();
  std::vector<int> cost((n + 1) * (m + 1));
  auto at = [m](int i, int j) { return i * (m + 1) + j; };
  for (int i = 0; i <= n; ++i) cost[at(i, 0)] = i;
  for (int j = 0; j <= m; ++j) cost[at(0, j)] = j;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= m; ++j) {
      const int diag = cost[at(i - 1, j - 1)] + (ref.tokens[i - 1] == hyp.tokens[j - 1] ? 0 : 1);
      cost[at(i, j)] = std::min({diag, cost[at(i - 1, j)] + 1, cost[at(i, j - 1)] + 1});
    }
  }
  std::vector<EditStep> steps;
  int i = n;
  int j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref.tokens[i - 1] == hyp.tokens[j - 1];
      if (cost[at(i, j)] == cost[at(i - 1, j - 1)] + (same ? 0 : 1)) {
        steps.push_back({same ? EditOp::kMatch : EditOp::kSub, i - 1, j - 1});
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[at(i, j)] == cost[at(i - 1, j)] + 1) {
      steps.push_back({EditOp::kDel, i - 1, -1});
      --i;
      continue;
    }
    steps.push_back({EditOp::kIns, -1, j - 1});
    --j;
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

EditCounts edit_distance(const LabelSequence& ref, const LabelSequence& hyp) {
  EditCounts c;
  for (const EditStep& s : edit_script(ref, hyp)) {
    switch (s.op) {
      case EditOp::kSub: ++c.subs; break;
      case EditOp::kIns: ++c.ins; break;
      case EditOp::kDel: ++c.dels; break;
      case EditOp::kMatch: break;
    }
  }
  return c;
}

double error_rate(const EditCounts& counts, long ref_tokens) {
  return 100.0 * static_cast<double>(counts.total()) / static_cast<double>(std::max(1L, ref_tokens));
}

std::string to_text(const Alignment& a, const Vocab& vocab) {
  std::ostringstream os;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    if (i) os << ' ';
    const int tok = a.tokens[i];
    if (tok == Vocab::kBlank) {
      os << '_';
    } else if (tok == vocab.mask_id()) {
      os << '?';
    } else {
      os << tok;
    }
  }
  return os.str();
}

std::string to_text(const LabelSequence& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (i) os << ' ';
    os << s.tokens[i];
  }
  return os.str();
}

Alignment parse_alignment(std::string_view text, const Vocab& vocab) {
  Alignment a;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    if (tok == "_") {
      a.tokens.push_back(Vocab::kBlank);
    } else if (tok == "?") {
      a.tokens.push_back(vocab.mask_id());
    } else {
      const int id = std::stoi(tok);
      ARF_CHECK(id >= 0 && id <= vocab.mask_id(), "alignment token " << id << " outside vocabulary");
      a.tokens.push_back(id);
    }
  }
  return a;
}

LabelSequence parse_labels(std::string_view text) {
  LabelSequence s;
  std::istringstream is{std::string(text)};
  int id;
  while (is >> id) {
    ARF_CHECK(id >= 1, "label id " << id << " is not a label");
    s.tokens.push_back(id);
  }
  ARF_CHECK(is.eof(), "malformed label sequence '" << text << "'");
  return s;
}

}  // namespace arf

// Human-readable decode reports. Errors are tagged inline: S:x for a
// substituted hypothesis token, I:x for an inserted one and D:x for a
// reference token the hypothesis dropped.
#pragma once

#include <string>
#include <vector>

#include "arf/alignkit.h"

namespace arf {

std::string tag_errors(const LabelSequence& ref, const LabelSequence& hyp);

struct ReportLine {
  std::string name;  // "first-pass", "step 1", ...
  LabelSequence hyp;
  Alignment alignment;
};

std::string decode_report(const std::string& utt_id, const LabelSequence& ref, const std::vector<ReportLine>& lines,
                          const Vocab& vocab);

}  // namespace arf

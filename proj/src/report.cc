#include "arf/report.h"

#include <iomanip>
#include <sstream>

namespace arf {

std::string tag_errors(const LabelSequence& ref, const LabelSequence& hyp) {
  std::ostringstream os;
  bool first = true;
  for (const EditStep& s : edit_script(ref, hyp)) {
    if (!first) os << ' ';
    first = false;
    switch (s.op) {
      case EditOp::kMatch: os << hyp.tokens[s.hyp]; break;
      case EditOp::kSub: os << "S:" << hyp.tokens[s.hyp]; break;
      case EditOp::kIns: os << "I:" << hyp.tokens[s.hyp]; break;
      case EditOp::kDel: os << "D:" << ref.tokens[s.ref]; break;
    }
  }
  return os.str();
}

std::string decode_report(const std::string& utt_id, const LabelSequence& ref, const std::vector<ReportLine>& lines,
                          const Vocab& vocab) {
  std::ostringstream os;
  os << utt_id << '\n';
  os << std::left << std::setw(12) << "reference" << to_text(ref) << '\n';
  for (const ReportLine& l : lines) {
    const EditCounts c = edit_distance(ref, l.hyp);
    os << std::setw(12) << l.name << tag_errors(ref, l.hyp) << "  [S=" << c.subs << " I=" << c.ins
       << " D=" << c.dels << "]\n";
    os << std::setw(12) << "  alignment" << to_text(l.alignment, vocab) << '\n';
  }
  return os.str();
}

}  // namespace arf

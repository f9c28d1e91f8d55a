#include <cstdio>
#include <ostream>
#include <sstream>

#include "arf/check.h"
#include "arf/harness.h"

namespace arf {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string metrics_header(int refine_steps) {
  std::string h = "step,split,loss,wer_first";
  for (int i = 1; i <= refine_steps; ++i) h += ",wer_step" + std::to_string(i);
  return h + ",skips,wall_s";
}

std::string format_metrics_row(const MetricsRow& row, int refine_steps) {
  std::ostringstream os;
  os << row.step << ',' << row.split << ',' << fixed(row.loss, 6) << ',' << fixed(row.wer_first, 4);
  for (int i = 0; i < refine_steps; ++i) {
    // Columns for steps that were not run stay empty.
    os << ',';
    if (i < static_cast<int>(row.wer_steps.size())) os << fixed(row.wer_steps[i], 4);
  }
  os << ',' << row.skips << ',' << fixed(row.wall_s, 3);
  return os.str();
}

MetricsWriter::MetricsWriter(std::ostream* os, int refine_steps) : os_(os), refine_steps_(refine_steps) {
  ARF_CHECK(os_ != nullptr, "metrics writer needs a stream");
  *os_ << metrics_header(refine_steps_) << '\n';
  os_->flush();
}

void MetricsWriter::write(const MetricsRow& row) {
  *os_ << format_metrics_row(row, refine_steps_) << '\n';
  os_->flush();
}

}  // namespace arf

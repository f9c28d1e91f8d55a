// Error types shared by every arf module.
#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace arf {

// A caller broke a documented precondition (shape mismatch, bad id, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// User-supplied configuration or input failed validation.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged or a file could not be produced.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void contract_failed(const char* expr, const std::string& msg,
                                         const char* file, int line) {
  std::ostringstream os;
  os << file << ":" << line << ": contract violation (" << expr << ")";
  if (!msg.empty()) os << ": " << msg;
  throw ContractViolation(os.str());
}
}  // namespace detail

}  // namespace arf

#define ARF_CHECK(cond, msg)                                                  \
  do {                                                                        \
    if (!(cond)) {                                                            \
      std::ostringstream arf_check_os_;                                       \
      arf_check_os_ << msg;                                                   \
      ::arf::detail::contract_failed(#cond, arf_check_os_.str(), __FILE__,    \
                                     __LINE__);                               \
    }                                                                         \
  } while (0)

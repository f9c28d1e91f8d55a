// Self-check suites shared by the CLI `verify` command and the acceptance
// binary. Each suite is deterministic given its seed.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace arf {

struct SuiteCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<SuiteCheck> checks;
  double seconds = 0.0;
  bool passed() const;
};

// 200 random instances with T <= 6, U <= 3, V <= 4 against enumeration.
SuiteResult verify_ctc_oracle(std::uint64_t seed = 7, int instances = 200, double tol = 1e-6);
// 100 random lattices with T' <= 4, U <= 3, V <= 3 against path enumeration.
SuiteResult verify_rnnt_oracle(std::uint64_t seed = 7, int instances = 100, double tol = 1e-6);
// Finite differences for ctc_loss, rnnt_loss (tol 1e-4) and
// refine_train_loss on a tiny config (tol 1e-3).
SuiteResult verify_gradients(std::uint64_t seed = 7, int instances = 20);
// Encoder causality, cascade right-context bound, beam-1 vs greedy and the
// blank count of every alignment.
SuiteResult verify_structure(std::uint64_t seed = 7);

std::vector<std::string> suite_names();
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

}  // namespace arf

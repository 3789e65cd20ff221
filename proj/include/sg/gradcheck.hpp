#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sg {

struct GradGroupResult {
  std::string group;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  int checked = 0;  // scalar coordinates compared
  bool passed = false;
};

struct GradSuiteResult {
  std::vector<GradGroupResult> groups;
  bool passed = false;
  double seconds = 0.0;
};

// Finite-difference verification of every hand-derived gradient: the full
// model backward (grouped by parameter family) under pinned-memory replay,
// the three loss gradients at the loss interface, the closed-form inner
// memory gradient, and the optimizer's hand-computable steps.
GradSuiteResult run_gradcheck(std::uint64_t seed = 11);

std::string format_gradcheck(const GradSuiteResult& r);

}  // namespace sg

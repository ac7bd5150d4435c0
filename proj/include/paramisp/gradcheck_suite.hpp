#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace paramisp {

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0;
  int64_t coords = 0;
};

/// Double-precision finite-difference checks of every primitive ("op/<name>")
/// and of the differentiable modules.
std::vector<GradcheckEntry> run_gradcheck_suite(uint64_t seed);

}  // namespace paramisp

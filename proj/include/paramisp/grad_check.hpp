#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "paramisp/tensor.hpp"

namespace paramisp {

struct GradCheckOptions {
  double eps = 1e-6;
  /// Coordinates sampled per parameter tensor; smaller tensors are checked fully.
  int max_coords_per_param = 16;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
  size_t worst_param = 0;
  int64_t worst_index = -1;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Error per coordinate is |a - n| / max(1, |a|).
GradCheckResult grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& options = {});

}  // namespace paramisp

#pragma once

#include <array>
#include <string>

namespace paramisp {

/// Layer widths of one direction's learnable networks.
struct ArchConfig {
  int z_dim = 64;
  int param_proj_dim = 64;
  std::array<int, 3> local_widths{32, 64, 128};
  int local_resblocks = 1;
  int cbam_reduction = 8;
  std::array<int, 4> global_widths{32, 48, 64, 64};
  int global_hidden = 64;
  int global_stages = 4;
  bool use_paramnet = true;

  void validate() const;
  /// Small widths for quick tests and the desk-scale experiments.
  static ArchConfig compact();
  static ArchConfig tiny();
};

}  // namespace paramisp

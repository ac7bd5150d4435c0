#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include "paramisp/canonet.hpp"
#include "paramisp/dataset.hpp"
#include "paramisp/paramnet.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

/// Synthetic ground-truth camera: CanoNet followed by one known quadratic
/// transform and one gamma curve, optionally with an ISO-dependent exponent.
struct OracleCamera {
  std::string name = "oracle";
  CanonicalParams cano;
  std::array<double, 30> quad{};  // 3 x 10, row-major
  std::array<double, 3> alpha{1, 1, 1};
  std::array<double, 3> beta{0.02, 0.02, 0.02};
  std::array<double, 3> gamma{0.45, 0.45, 0.45};
  bool iso_drift = false;
  double drift_strength = 0.77;
  int black_level = 512;
  int white_level = 16383;

  static OracleCamera make(uint64_t seed, bool iso_drift = false);
  /// Exponent in effect at a given ISO.
  std::array<double, 3> gamma_at(double iso) const;
  /// Ground-truth tone on a linear image: clamp01(f_g(f_q(lin))).
  Tensor<double> tone(const Tensor<double>& lin, double iso) const;
};

struct OracleOptions {
  int count = 16;
  int size = 64;
  uint64_t seed = 0;
  double val_fraction = 0.1;
  bool highlights = false;
  /// Gaussian RAW noise with sigma 0.002 * sqrt(iso / 100).
  bool noise = false;
};

/// Linear scene (3 x size x size): smooth gradient, colour patches and texture.
Tensor<double> synth_scene(int size, std::mt19937_64& rng, bool highlights);
OpticalParams sample_optical_params(std::mt19937_64& rng);

/// Renders one pair; RAW and sRGB are quantized exactly as they are stored on disk.
Sample render_oracle_pair(const OracleCamera& cam, const Tensor<double>& scene, const OpticalParams& opt,
                          std::mt19937_64* noise_rng, const std::string& id);

Dataset make_oracle_dataset(const OracleCamera& cam, const OracleOptions& options);
/// Renders and writes the dataset to dir; returns it as loaded.
Dataset write_oracle_dataset(const OracleCamera& cam, const OracleOptions& options, const std::string& dir);

}  // namespace paramisp

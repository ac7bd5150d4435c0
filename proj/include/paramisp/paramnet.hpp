#pragma once

#include <array>
#include <random>
#include <span>
#include <string>

#include "paramisp/nn.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

struct OpticalParams {
  double exposure_time_s = 1.0 / 100.0;
  double iso = 100.0;
  double f_number = 4.0;
  double focal_length_mm = 50.0;

  std::array<double, 4> values() const { return {exposure_time_s, iso, f_number, focal_length_mm}; }
  void validate() const;
};

inline constexpr int kEqualizedDim = 15;
inline constexpr int kOpticalCount = 4;
inline constexpr const char* kOpticalNames[kOpticalCount] = {"exposure_time_s", "iso", "f_number", "focal_length_mm"};

using Range = std::array<double, 2>;  // lo, hi

struct EqualizationConfig {
  std::array<double, 3> c_values{1.0, 4.0, 16.0};
  /// Per parameter: range of log(x) used to map x into u in [0,1] for the sinusoids.
  std::array<Range, kOpticalCount> log_range{};
  /// Per parameter and function: affine range mapped to [0,1].
  std::array<std::array<Range, kEqualizedDim>, kOpticalCount> ranges{};
  /// Off: raw function values, sinusoids of raw x (ablation).
  bool normalize = true;

  /// Ranges from dense sampling of broad consumer-camera bounds.
  static EqualizationConfig defaults();
  /// Ranges from the observed min/max over samples.
  static EqualizationConfig fit(std::span<const OpticalParams> samples);
  void validate() const;
};

/// The 15 function values before normalization.
std::array<double, kEqualizedDim> equalize_raw(double x, const EqualizationConfig& cfg, int param_id);
/// Normalized to [0,1] (or raw values when cfg.normalize is false).
std::array<double, kEqualizedDim> equalize_parameter(double x, const EqualizationConfig& cfg, int param_id);

/// Per-branch keep mask; identity when not training.
std::array<bool, kOpticalCount> param_dropout_mask(double p, std::mt19937_64& rng, bool training);

struct RunContext {
  bool training = false;
  double dropout_p = 0.2;
  std::mt19937_64* rng = nullptr;  // required when training
};

template <class T>
class ParamNet {
 public:
  ParamNet() = default;
  ParamNet(ParamStore<T>& store, const std::string& prefix, int proj_dim, int z_dim, std::mt19937_64& rng);

  /// z as a z_dim x 1 column.
  Tensor<T> forward(const OpticalParams& params, const EqualizationConfig& cfg, const RunContext& ctx) const;
  /// forward with explicit branch inputs (each 15 x 1); used by dropout tests.
  Tensor<T> forward_branches(const std::array<Tensor<T>, kOpticalCount>& branches) const;
  int z_dim() const { return z_dim_; }

 private:
  std::array<Linear<T>, kOpticalCount> proj_{};
  Linear<T> fc1_, fc2_;
  int z_dim_ = 0;
};

}  // namespace paramisp

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "paramisp/tensor.hpp"

namespace paramisp {

enum class BayerPattern { RGGB, BGGR, GRBG, GBRG };

/// Channel (0=R, 1=G, 2=B) measured at (y, x).
int bayer_channel(BayerPattern pattern, int64_t y, int64_t x) noexcept;
BayerPattern parse_bayer_pattern(std::string_view name);
const char* bayer_pattern_name(BayerPattern pattern) noexcept;

using Mat3 = std::array<double, 9>;  // row-major

inline constexpr Mat3 kIdentity3{1, 0, 0, 0, 1, 0, 0, 0, 1};

struct CanonicalParams {
  BayerPattern pattern = BayerPattern::RGGB;
  std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
  Mat3 ccm = kIdentity3;  // camera RGB -> linear sRGB

  void validate() const;
};

double det3(const Mat3& m) noexcept;
/// Inverse of an invertible 3x3 matrix; |det| must exceed 1e-8.
Mat3 invert3(const Mat3& m);

/// Bilinear-corrected 5x5 demosaic of a 1 x H x W mosaic into 3 x H x W.
/// Measured samples pass through unchanged; output is clamped to [0,1].
template <class T> Tensor<T> demosaic_malvar(const Tensor<T>& raw, BayerPattern pattern);
template <class T> Tensor<T> mosaic(const Tensor<T>& rgb, BayerPattern pattern);

template <class T> Tensor<T> apply_white_balance(const Tensor<T>& img, const std::array<double, 3>& gains);
template <class T> Tensor<T> invert_white_balance(const Tensor<T>& img, const std::array<double, 3>& gains);
template <class T> Tensor<T> apply_cst(const Tensor<T>& img, const Mat3& m);
template <class T> Tensor<T> invert_cst(const Tensor<T>& img, const Mat3& m);

/// demosaic -> white balance -> colour transform. Unclamped after demosaic.
template <class T> Tensor<T> canonet_forward(const Tensor<T>& raw, const CanonicalParams& params);
/// inverse colour transform -> inverse white balance -> mosaic, clamped to [0,1].
template <class T> Tensor<T> canonet_inverse(const Tensor<T>& lin, const CanonicalParams& params);

}  // namespace paramisp

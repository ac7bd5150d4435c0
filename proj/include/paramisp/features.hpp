#pragma once

#include "paramisp/tensor.hpp"

namespace paramisp {

inline constexpr int kHistogramBins = 28;
inline constexpr int kFeatureChannels = 96;

/// 3 x H x W -> 6 x H x W Sobel responses (R_h, R_v, G_h, G_v, B_h, B_v), reflect padded.
template <class T> Tensor<T> sobel_gradient_map(const Tensor<T>& img);
/// Triangular soft histogram of values in [0,1]; R bins, then G, then B.
template <class T> Tensor<T> soft_histogram_map(const Tensor<T>& img, int bins = kHistogramBins);
/// 10 * max(x - tau, 0) per channel.
template <class T> Tensor<T> overexposure_mask(const Tensor<T>& img, T tau = T(0.9));
/// [image | gradients | histogram of clamp(image) | mask] = 96 channels.
/// Built from differentiable ops so gradients reach the image through every branch.
template <class T> Tensor<T> assemble_feature_stack(const Tensor<T>& img);

}  // namespace paramisp

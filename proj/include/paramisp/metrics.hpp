#pragma once

#include "paramisp/tensor.hpp"

namespace paramisp {

/// 10 log10(1 / MSE) with peak 1; 100 when MSE < 1e-10.
template <class T> double psnr(const Tensor<T>& pred, const Tensor<T>& ref);
/// Single-scale SSIM, 11 x 11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// valid region only, averaged over channels.
template <class T> double ssim(const Tensor<T>& pred, const Tensor<T>& ref);

}  // namespace paramisp

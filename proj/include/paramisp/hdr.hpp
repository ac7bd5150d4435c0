#pragma once

#include <vector>

#include "paramisp/pipeline.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

struct FusionConfig {
  std::vector<double> gains{0.1, 1.4, 2.7, 4.0};
  double sigma = 0.2;
  double contrast_exponent = 1.0;
  double saturation_exponent = 1.0;
  double exposedness_exponent = 1.0;
  int levels = 0;  // 0: floor(log2(min(H, W))) - 2

  void validate() const;
};

/// Per-pixel quality (1 x H x W): contrast * saturation * well-exposedness.
Tensor<double> exposure_weights(const Tensor<float>& img, const FusionConfig& cfg);
/// Weights of each image normalized (with 1e-12 added) to sum to one per pixel.
std::vector<Tensor<double>> fusion_weights(const std::vector<Tensor<float>>& images, const FusionConfig& cfg);
/// Laplacian-pyramid blend under Gaussian pyramids of the weights, clamped to [0,1].
Tensor<float> mertens_fuse(const std::vector<Tensor<float>>& images, const FusionConfig& cfg);

/// Forwarded renders of gained, clamped reconstructions of a single sRGB image.
std::vector<Tensor<float>> hdr_renders(const Tensor<float>& srgb, const IspModel& inverse, const IspModel& forward,
                                       const CanonicalParams& cano, const OpticalParams& opt, const FusionConfig& cfg);
Tensor<float> hdr_reconstruct(const Tensor<float>& srgb, const IspModel& inverse, const IspModel& forward,
                              const CanonicalParams& cano, const OpticalParams& opt, const FusionConfig& cfg);

}  // namespace paramisp

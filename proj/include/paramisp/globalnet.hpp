#pragma once

#include <array>
#include <random>
#include <string>
#include <vector>

#include "paramisp/arch.hpp"
#include "paramisp/nn.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

inline constexpr double kBetaMin = 1e-3;
inline constexpr int kStageOutputs = 39;  // 30 quadratic + 9 gamma
/// Head outputs are scaled by this before decoding, so one optimizer step moves the coefficients gently.
inline constexpr double kCoeffResidualScale = 0.1;

/// p' = [r^2, g^2, b^2, rg, gb, br, r, g, b, 1].
std::array<double, 10> quad_features(double r, double g, double b) noexcept;

/// Rows select the linear terms.
template <class T> Tensor<T> identity_quad_matrix();

/// One (f_q, f_g) pair. alpha/beta/gamma are 3 x 1 x 1, w is 3 x 10.
template <class T>
struct GlobalStage {
  Tensor<T> w;
  Tensor<T> alpha, beta, gamma;
};

template <class T> Tensor<T> quadratic_transform(const Tensor<T>& img, const Tensor<T>& w);
/// ((a p + b)^g - b^g) / ((a + b)^g - b^g) per channel, input clamped at 0.
template <class T>
Tensor<T> gamma_correction(const Tensor<T>& img, const Tensor<T>& alpha, const Tensor<T>& beta, const Tensor<T>& gamma);
/// Stages in order, each output clamped to [0, 4].
template <class T> Tensor<T> global_adjust(const Tensor<T>& img, const std::vector<GlobalStage<T>>& stages);

/// Raw head outputs (39 per stage) to coefficients, as residuals around identity.
template <class T> std::vector<GlobalStage<T>> decode_global_coeffs(const Tensor<T>& raw, int stages);
/// Offset added to the beta logit; its softplus plus kBetaMin is the initial beta.
double initial_beta_logit() noexcept;

template <class T>
class GlobalNet {
 public:
  GlobalNet() = default;
  GlobalNet(ParamStore<T>& store, const std::string& prefix, const ArchConfig& arch, std::mt19937_64& rng);

  /// img is 3 x H x W with H, W multiples of 16; z is z_dim x 1.
  std::vector<GlobalStage<T>> predict(const Tensor<T>& img, const Tensor<T>& z) const;
  Tensor<T> forward(const Tensor<T>& img, const Tensor<T>& z) const { return global_adjust(img, predict(img, z)); }
  int stages() const { return stages_; }

 private:
  std::array<Conv2d<T>, 4> enc_{};
  Linear<T> zhead_, fc1_, fc2_;
  int stages_ = 0;
};

}  // namespace paramisp

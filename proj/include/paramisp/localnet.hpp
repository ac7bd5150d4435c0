#pragma once

#include <random>
#include <string>
#include <vector>

#include "paramisp/arch.hpp"
#include "paramisp/nn.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

/// Output conv response is scaled by this before being added to the input.
inline constexpr double kResidualScale = 0.1;

template <class T>
struct Cbam {
  Linear<T> fc1, fc2;  // channel MLP, C -> C/r -> C
  Conv2d<T> spatial;   // 2 -> 1, 7 x 7

  Tensor<T> operator()(const Tensor<T>& x) const;
  /// Gates without applying them: channel (C x 1 x 1) and spatial (1 x H x W, computed on the channel-gated input).
  std::pair<Tensor<T>, Tensor<T>> gates(const Tensor<T>& x) const;
};

template <class T>
Cbam<T> make_cbam(ParamStore<T>& store, const std::string& name, int channels, int reduction, std::mt19937_64& rng);

template <class T>
struct ResBlock {
  Conv2d<T> conv1, conv2;
  Cbam<T> attention;

  /// x + CBAM(conv2(lrelu(conv1(x)))).
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
class LocalNet {
 public:
  LocalNet() = default;
  LocalNet(ParamStore<T>& store, const std::string& prefix, const ArchConfig& arch, std::mt19937_64& rng);

  /// input + residual. H and W must be multiples of 4.
  Tensor<T> forward(const Tensor<T>& input, const Tensor<T>& z) const;

 private:
  Tensor<T> run(const std::vector<ResBlock<T>>& blocks, Tensor<T> x) const;

  Conv2d<T> stem_;
  Linear<T> zhead_;
  std::vector<ResBlock<T>> enc1_, enc2_, bottleneck_, dec2_, dec1_;
  Conv2d<T> down1_, down2_, up2_, fuse2_, up1_, fuse1_, out_;
  int width0_ = 0;
};

}  // namespace paramisp

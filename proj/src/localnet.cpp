#include "paramisp/localnet.hpp"

#include <algorithm>

#include "paramisp/error.hpp"
#include "paramisp/features.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

template <class T>
std::pair<Tensor<T>, Tensor<T>> Cbam<T>::gates(const Tensor<T>& x) const {
  const int64_t c = x.dim(0);
  if (fc1.weight.dim(1) != c)
    raise(ErrorCode::ShapeMismatch, "CBAM: built for ", fc1.weight.dim(1), " channels, got ", shape_str(x.shape()));
  auto mlp = [&](const Tensor<T>& v) { return fc2(relu(fc1(reshape(v, {c, 1})))); };
  Tensor<T> channel = reshape(sigmoid(add(mlp(global_avg_pool(x)), mlp(global_max_pool(x)))), {c, 1, 1});
  Tensor<T> gated = mul(x, channel);
  Tensor<T> spatial_gate = sigmoid(spatial(concat<T>({channel_mean(gated), channel_max(gated)})));
  return {channel, spatial_gate};
}

template <class T>
Tensor<T> Cbam<T>::operator()(const Tensor<T>& x) const {
  auto [channel, spatial_gate] = gates(x);
  return mul(mul(x, channel), spatial_gate);
}

template <class T>
Cbam<T> make_cbam(ParamStore<T>& store, const std::string& name, int channels, int reduction, std::mt19937_64& rng) {
  Cbam<T> m;
  const int hidden = std::max(1, channels / reduction);
  m.fc1 = make_linear(store, name + ".fc1", channels, hidden, rng);
  m.fc2 = make_linear(store, name + ".fc2", hidden, channels, rng);
  m.spatial = make_conv(store, name + ".spatial", 2, 1, 7, 1, rng);
  return m;
}

template <class T>
Tensor<T> ResBlock<T>::operator()(const Tensor<T>& x) const {
  return add(x, attention(conv2(leaky_relu(conv1(x)))));
}

namespace {

template <class T>
std::vector<ResBlock<T>> make_blocks(ParamStore<T>& store, const std::string& name, int count, int channels,
                                     int reduction, std::mt19937_64& rng) {
  std::vector<ResBlock<T>> blocks;
  for (int i = 0; i < count; ++i) {
    const std::string n = name + "." + std::to_string(i);
    ResBlock<T> b;
    b.conv1 = make_conv(store, n + ".conv1", channels, channels, 3, 1, rng);
    b.conv2 = make_conv(store, n + ".conv2", channels, channels, 3, 1, rng);
    b.attention = make_cbam(store, n + ".cbam", channels, reduction, rng);
    blocks.push_back(b);
  }
  return blocks;
}

}  // namespace

template <class T>
LocalNet<T>::LocalNet(ParamStore<T>& store, const std::string& prefix, const ArchConfig& arch, std::mt19937_64& rng) {
  const auto [w0, w1, w2] = arch.local_widths;
  const int nb = arch.local_resblocks, r = arch.cbam_reduction;
  width0_ = w0;
  stem_ = make_conv(store, prefix + ".stem", kFeatureChannels, w0, 3, 1, rng);
  zhead_ = make_linear(store, prefix + ".zhead", arch.z_dim, w0, rng);
  enc1_ = make_blocks(store, prefix + ".enc1", nb, w0, r, rng);
  down1_ = make_conv(store, prefix + ".down1", w0, w1, 3, 2, rng);
  enc2_ = make_blocks(store, prefix + ".enc2", nb, w1, r, rng);
  down2_ = make_conv(store, prefix + ".down2", w1, w2, 3, 2, rng);
  bottleneck_ = make_blocks(store, prefix + ".bottleneck", nb, w2, r, rng);
  up2_ = make_conv(store, prefix + ".up2", w2, w1, 1, 1, rng);
  fuse2_ = make_conv(store, prefix + ".fuse2", 2 * w1, w1, 1, 1, rng);
  dec2_ = make_blocks(store, prefix + ".dec2", nb, w1, r, rng);
  up1_ = make_conv(store, prefix + ".up1", w1, w0, 1, 1, rng);
  fuse1_ = make_conv(store, prefix + ".fuse1", 2 * w0, w0, 1, 1, rng);
  dec1_ = make_blocks(store, prefix + ".dec1", nb, w0, r, rng);
  out_ = make_conv(store, prefix + ".out", w0, 3, 3, 1, rng, Init::Zero);
}

template <class T>
Tensor<T> LocalNet<T>::run(const std::vector<ResBlock<T>>& blocks, Tensor<T> x) const {
  for (const auto& b : blocks) x = b(x);
  return x;
}

template <class T>
Tensor<T> LocalNet<T>::forward(const Tensor<T>& input, const Tensor<T>& z) const {
  if (input.ndim() != 3 || input.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "LocalNet: expected 3 x H x W, got ", shape_str(input.shape()));
  if (input.dim(1) % 4 || input.dim(2) % 4)
    raise(ErrorCode::ShapeMismatch, "LocalNet: spatial size must be a multiple of 4, got ", shape_str(input.shape()));
  Tensor<T> x = leaky_relu(stem_(assemble_feature_stack(input)));
  x = add(x, reshape(zhead_(z), {width0_, 1, 1}));
  Tensor<T> skip1 = run(enc1_, x);
  Tensor<T> skip2 = run(enc2_, leaky_relu(down1_(skip1)));
  Tensor<T> y = run(bottleneck_, leaky_relu(down2_(skip2)));
  y = up2_(upsample_nearest2x(y));
  y = run(dec2_, leaky_relu(fuse2_(concat<T>({y, skip2}))));
  y = up1_(upsample_nearest2x(y));
  y = run(dec1_, leaky_relu(fuse1_(concat<T>({y, skip1}))));
  return add(input, mul_scalar(out_(y), static_cast<T>(kResidualScale)));
}

#define PARAMISP_INSTANTIATE(T)                                                                             \
  template struct Cbam<T>;                                                                                  \
  template Cbam<T> make_cbam(ParamStore<T>&, const std::string&, int, int, std::mt19937_64&);               \
  template struct ResBlock<T>;                                                                              \
  template class LocalNet<T>;

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

}  // namespace paramisp

#include "paramisp/pipeline.hpp"

#include "paramisp/error.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

const char* direction_name(Direction d) noexcept {
  return d == Direction::Forward ? "forward" : "inverse";
}

Direction parse_direction(std::string_view name) {
  if (name == "fwd" || name == "forward") return Direction::Forward;
  if (name == "inv" || name == "inverse") return Direction::Inverse;
  raise(ErrorCode::InvalidArgument, "unknown direction '", name, "' (expected fwd or inv)");
}

template <class T>
Tensor<T> pad_to_multiple(const Tensor<T>& img, int64_t multiple) {
  if (img.ndim() != 3) raise(ErrorCode::ShapeMismatch, "pad_to_multiple: expected C x H x W");
  const int64_t ph = (multiple - img.dim(1) % multiple) % multiple;
  const int64_t pw = (multiple - img.dim(2) % multiple) % multiple;
  if (ph == 0 && pw == 0) return img;
  return pad_reflect(img, 0, ph, 0, pw);
}

namespace {

template <class T>
Tensor<T> crop_back(const Tensor<T>& x, int64_t h, int64_t w) {
  if (x.dim(1) == h && x.dim(2) == w) return x;
  return crop(x, 0, 0, h, w);
}

}  // namespace

template <class T>
IspModelT<T>::IspModelT(const ModelConfig& config, uint64_t seed)
    : config_(config), store_(std::make_unique<ParamStore<T>>()) {
  config_.arch.validate();
  config_.equalization.validate();
  std::mt19937_64 rng(seed);
  if (config_.arch.use_paramnet)
    paramnet_ = ParamNet<T>(*store_, "paramnet", config_.arch.param_proj_dim, config_.arch.z_dim, rng);
  local_ = LocalNet<T>(*store_, "localnet", config_.arch, rng);
  global_ = GlobalNet<T>(*store_, "globalnet", config_.arch, rng);
}

template <class T>
std::vector<Tensor<T>> IspModelT<T>::trainable() const {
  return store_->tensors();
}

template <class T>
void IspModelT<T>::require(Direction d, const char* op) const {
  if (config_.direction != d)
    raise(ErrorCode::Direction, op, " needs a ", direction_name(d), " model, got a ", direction_name(config_.direction),
          " model");
}

template <class T>
Tensor<T> IspModelT<T>::conditioning(const OpticalParams& opt, const RunContext& ctx) const {
  opt.validate();
  if (!config_.arch.use_paramnet) return Tensor<T>::zeros({config_.arch.z_dim, 1});
  return paramnet_.forward(opt, config_.equalization, ctx);
}

template <class T>
Tensor<T> IspModelT<T>::local_stage(const Tensor<T>& img, const Tensor<T>& z) const {
  return crop_back(local_.forward(pad_to_multiple(img, kSpatialMultiple), z), img.dim(1), img.dim(2));
}

template <class T>
Tensor<T> IspModelT<T>::global_stage(const Tensor<T>& img, const Tensor<T>& z) const {
  return crop_back(global_.forward(pad_to_multiple(img, kSpatialMultiple), z), img.dim(1), img.dim(2));
}

template <class T>
Tensor<T> IspModelT<T>::forward(const Tensor<T>& raw, const CanonicalParams& cano, const OpticalParams& opt,
                                const RunContext& ctx) const {
  require(Direction::Forward, "forward rendering");
  if (raw.ndim() != 3 || raw.dim(0) != 1)
    raise(ErrorCode::ShapeMismatch, "forward rendering: RAW must be 1 x H x W, got ", shape_str(raw.shape()));
  Tensor<T> z = conditioning(opt, ctx);
  Tensor<T> lin = canonet_forward(raw, cano);
  Tensor<T> padded = pad_to_multiple(lin, kSpatialMultiple);
  Tensor<T> out = global_.forward(local_.forward(padded, z), z);
  return clamp(crop_back(out, raw.dim(1), raw.dim(2)), T(0), T(1));
}

template <class T>
Tensor<T> IspModelT<T>::inverse(const Tensor<T>& srgb, const CanonicalParams& cano, const OpticalParams& opt,
                                const RunContext& ctx) const {
  require(Direction::Inverse, "inverse rendering");
  if (srgb.ndim() != 3 || srgb.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "inverse rendering: sRGB must be 3 x H x W, got ", shape_str(srgb.shape()));
  Tensor<T> z = conditioning(opt, ctx);
  Tensor<T> padded = pad_to_multiple(srgb, kSpatialMultiple);
  Tensor<T> lin = local_.forward(global_.forward(padded, z), z);
  return canonet_inverse(crop_back(lin, srgb.dim(1), srgb.dim(2)), cano);
}

template <class T>
template <class U>
IspModelT<U> IspModelT<T>::cast() const {
  IspModelT<U> out(config_, 0);
  out.load_weights_from(*this);
  return out;
}

template <class T>
template <class U>
void IspModelT<T>::load_weights_from(const IspModelT<U>& other) {
  const auto& src = other.params();
  if (src.size() != store_->size())
    raise(ErrorCode::ShapeMismatch, "load_weights_from: parameter count ", src.size(), " vs ", store_->size());
  for (size_t i = 0; i < src.size(); ++i) {
    if (src.names()[i] != store_->names()[i] || src.tensors()[i].shape() != store_->tensors()[i].shape())
      raise(ErrorCode::ShapeMismatch, "load_weights_from: parameter ", src.names()[i], " does not match");
    auto dst = store_->tensors()[i];
    auto d = dst.data_mut();
    auto s = src.tensors()[i].data();
    for (size_t j = 0; j < d.size(); ++j) d[j] = static_cast<T>(s[j]);
  }
}

template <class T>
void IspModelT<T>::set_values(const std::string& name, std::span<const float> values) {
  const Tensor<T>* t = store_->find(name);
  if (!t) raise(ErrorCode::InvalidArgument, "unknown parameter ", name);
  Tensor<T> dst = *t;
  if (static_cast<int64_t>(values.size()) != dst.numel())
    raise(ErrorCode::ShapeMismatch, "parameter ", name, " has ", dst.numel(), " values, got ", values.size());
  auto d = dst.data_mut();
  for (size_t j = 0; j < d.size(); ++j) d[j] = static_cast<T>(values[j]);
}

template <class T>
Tensor<T> camera_transfer(const Tensor<T>& srgb, const IspModelT<T>& inverse_a, const IspModelT<T>& forward_b,
                          const CanonicalParams& cano_a, const CanonicalParams& cano_b, const OpticalParams& opt) {
  if (inverse_a.direction() != Direction::Inverse || forward_b.direction() != Direction::Forward)
    raise(ErrorCode::Direction, "camera_transfer needs an inverse model A and a forward model B");
  return forward_b.forward(inverse_a.inverse(srgb, cano_a, opt), cano_b, opt);
}

template class IspModelT<float>;
template class IspModelT<double>;
template IspModelT<double> IspModelT<float>::cast<double>() const;
template IspModelT<float> IspModelT<double>::cast<float>() const;
template IspModelT<float> IspModelT<float>::cast<float>() const;
template void IspModelT<float>::load_weights_from(const IspModelT<float>&);
template void IspModelT<float>::load_weights_from(const IspModelT<double>&);
template void IspModelT<double>::load_weights_from(const IspModelT<float>&);
template void IspModelT<double>::load_weights_from(const IspModelT<double>&);
template Tensor<float> pad_to_multiple(const Tensor<float>&, int64_t);
template Tensor<double> pad_to_multiple(const Tensor<double>&, int64_t);
template Tensor<float> camera_transfer(const Tensor<float>&, const IspModelT<float>&, const IspModelT<float>&,
                                       const CanonicalParams&, const CanonicalParams&, const OpticalParams&);
template Tensor<double> camera_transfer(const Tensor<double>&, const IspModelT<double>&, const IspModelT<double>&,
                                        const CanonicalParams&, const CanonicalParams&, const OpticalParams&);

}  // namespace paramisp

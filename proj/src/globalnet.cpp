#include "paramisp/globalnet.hpp"

#include <cmath>
#include <limits>

#include "paramisp/error.hpp"
#include "paramisp/features.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

void ArchConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) raise(ErrorCode::InvalidArgument, "architecture: ", name, " must be >= 1, got ", v);
  };
  positive(z_dim, "z_dim");
  positive(param_proj_dim, "param_proj_dim");
  for (int w : local_widths) positive(w, "local width");
  for (int w : global_widths) positive(w, "global width");
  positive(local_resblocks, "local_resblocks");
  positive(cbam_reduction, "cbam_reduction");
  positive(global_hidden, "global_hidden");
  if (global_stages < 1 || global_stages > 8)
    raise(ErrorCode::InvalidArgument, "architecture: global_stages must be in [1, 8], got ", global_stages);
}

ArchConfig ArchConfig::compact() {
  ArchConfig a;
  a.z_dim = 32;
  a.param_proj_dim = 32;
  a.local_widths = {16, 32, 64};
  a.global_widths = {16, 24, 32, 32};
  a.global_hidden = 32;
  return a;
}

ArchConfig ArchConfig::tiny() {
  ArchConfig a;
  a.z_dim = 8;
  a.param_proj_dim = 8;
  a.local_widths = {8, 8, 16};
  a.cbam_reduction = 4;
  a.global_widths = {8, 8, 8, 8};
  a.global_hidden = 8;
  a.global_stages = 2;
  return a;
}

std::array<double, 10> quad_features(double r, double g, double b) noexcept {
  return {r * r, g * g, b * b, r * g, g * b, b * r, r, g, b, 1.0};
}

template <class T>
Tensor<T> identity_quad_matrix() {
  Tensor<T> w = Tensor<T>::zeros({3, 10});
  auto d = w.data_mut();
  for (int c = 0; c < 3; ++c) d[c * 10 + 6 + c] = T(1);
  return w;
}

template <class T>
Tensor<T> quadratic_transform(const Tensor<T>& img, const Tensor<T>& w) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "quadratic_transform: expected 3 x H x W, got ", shape_str(img.shape()));
  if (w.shape() != Shape{3, 10})
    raise(ErrorCode::ShapeMismatch, "quadratic_transform: matrix must be 3 x 10, got ", shape_str(w.shape()));
  const int64_t h = img.dim(1), wd = img.dim(2);
  Tensor<T> r = slice(img, 0, 1), g = slice(img, 1, 2), b = slice(img, 2, 3);
  Tensor<T> lifted = concat<T>({mul(r, r), mul(g, g), mul(b, b), mul(r, g), mul(g, b), mul(b, r), img,
                                Tensor<T>::full({1, h, wd}, T(1))});
  return reshape(matmul(w, reshape(lifted, {10, h * wd})), {3, h, wd});
}

template <class T>
Tensor<T> gamma_correction(const Tensor<T>& img, const Tensor<T>& alpha, const Tensor<T>& beta, const Tensor<T>& gamma) {
  const Shape coeff{3, 1, 1};
  if (img.ndim() != 3 || img.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "gamma_correction: expected 3 x H x W, got ", shape_str(img.shape()));
  if (alpha.shape() != coeff || beta.shape() != coeff || gamma.shape() != coeff)
    raise(ErrorCode::ShapeMismatch, "gamma_correction: coefficients must be 3 x 1 x 1");
  for (int c = 0; c < 3; ++c) {
    if (!(alpha.data()[c] > 0) || !(beta.data()[c] > 0) || !(gamma.data()[c] > 0))
      raise(ErrorCode::Domain, "gamma_correction: coefficients of channel ", c, " must be positive");
  }
  Tensor<T> x = clamp(img, T(0), std::numeric_limits<T>::max());
  Tensor<T> offset = pow(beta, gamma);
  Tensor<T> den = sub(pow(add(alpha, beta), gamma), offset);
  for (int c = 0; c < 3; ++c)
    if (!(den.data()[c] >= T(1e-12)))
      raise(ErrorCode::Domain, "gamma_correction: denominator ", den.data()[c], " below 1e-12 in channel ", c);
  return div(sub(pow(add(mul(alpha, x), beta), gamma), offset), den);
}

template <class T>
Tensor<T> global_adjust(const Tensor<T>& img, const std::vector<GlobalStage<T>>& stages) {
  Tensor<T> x = img;
  for (const auto& s : stages) x = clamp(gamma_correction(quadratic_transform(x, s.w), s.alpha, s.beta, s.gamma), T(0), T(4));
  return x;
}

namespace {

const double kUnitLogit = std::log(std::exp(1.0) - 1.0);  // softplus(kUnitLogit) = 1

template <class T>
T softplus_scalar(T v) {
  return v > T(20) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

// softplus(r + c) / softplus(c): exactly 1 at r = 0.
template <class T>
Tensor<T> around_one(const Tensor<T>& r) {
  const T c = static_cast<T>(kUnitLogit);
  return div(softplus(add_scalar(r, c)), Tensor<T>::full({3, 1, 1}, softplus_scalar(c)));
}

}  // namespace

double initial_beta_logit() noexcept {
  return std::log(std::expm1(0.02 - kBetaMin));
}

template <class T>
std::vector<GlobalStage<T>> decode_global_coeffs(const Tensor<T>& raw, int stages) {
  if (raw.numel() != static_cast<int64_t>(stages) * kStageOutputs)
    raise(ErrorCode::ShapeMismatch, "decode_global_coeffs: ", raw.numel(), " outputs for ", stages, " stages");
  Tensor<T> flat = reshape(raw, {raw.numel()});
  const Tensor<T> w_id = identity_quad_matrix<T>();
  std::vector<GlobalStage<T>> out;
  for (int n = 0; n < stages; ++n) {
    const int64_t base = static_cast<int64_t>(n) * kStageOutputs;
    GlobalStage<T> s;
    s.w = add(reshape(slice(flat, base, base + 30), {3, 10}), w_id);
    auto pick = [&](int which) {
      std::array<int64_t, 3> idx{base + 30 + which, base + 33 + which, base + 36 + which};
      return gather(flat, std::span<const int64_t>(idx), {3, 1, 1});
    };
    s.alpha = around_one(pick(0));
    s.beta = add_scalar(softplus(add_scalar(pick(1), static_cast<T>(initial_beta_logit()))), static_cast<T>(kBetaMin));
    s.gamma = around_one(pick(2));
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
GlobalNet<T>::GlobalNet(ParamStore<T>& store, const std::string& prefix, const ArchConfig& arch, std::mt19937_64& rng)
    : stages_(arch.global_stages) {
  int in = kFeatureChannels;
  for (int i = 0; i < 4; ++i) {
    enc_[i] = make_conv(store, prefix + ".enc" + std::to_string(i), in, arch.global_widths[i], 3, 1, rng);
    in = arch.global_widths[i];
  }
  zhead_ = make_linear(store, prefix + ".zhead", arch.z_dim, in, rng);
  fc1_ = make_linear(store, prefix + ".fc1", in, arch.global_hidden, rng);
  fc2_ = make_linear(store, prefix + ".fc2", arch.global_hidden, kStageOutputs * stages_, rng, Init::Zero);
}

template <class T>
std::vector<GlobalStage<T>> GlobalNet<T>::predict(const Tensor<T>& img, const Tensor<T>& z) const {
  if (img.ndim() != 3 || img.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, "GlobalNet: expected 3 x H x W, got ", shape_str(img.shape()));
  if (img.dim(1) < 16 || img.dim(2) < 16 || img.dim(1) % 16 || img.dim(2) % 16)
    raise(ErrorCode::ShapeMismatch, "GlobalNet: spatial size must be a multiple of 16 and at least 16, got ",
          shape_str(img.shape()));
  Tensor<T> x = assemble_feature_stack(img);
  for (const auto& conv : enc_) x = max_pool2x2(leaky_relu(conv(x)));
  Tensor<T> g = reshape(global_avg_pool(x), {x.dim(0), 1});
  g = add(g, zhead_(z));
  return decode_global_coeffs(mul_scalar(fc2_(leaky_relu(fc1_(g))), static_cast<T>(kCoeffResidualScale)), stages_);
}

#define PARAMISP_INSTANTIATE(T)                                                                                  \
  template Tensor<T> identity_quad_matrix<T>();                                                                 \
  template Tensor<T> quadratic_transform(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> gamma_correction(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> global_adjust(const Tensor<T>&, const std::vector<GlobalStage<T>>&);                       \
  template std::vector<GlobalStage<T>> decode_global_coeffs(const Tensor<T>&, int);                             \
  template class GlobalNet<T>;

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

}  // namespace paramisp

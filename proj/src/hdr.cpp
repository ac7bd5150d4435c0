#include "paramisp/hdr.hpp"

#include <algorithm>
#include <cmath>

#include "paramisp/error.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

void FusionConfig::validate() const {
  if (gains.empty()) raise(ErrorCode::InvalidArgument, "fusion needs at least one gain");
  for (double g : gains)
    if (!(g > 0) || !std::isfinite(g)) raise(ErrorCode::InvalidArgument, "gain must be positive, got ", g);
  if (!(sigma > 0)) raise(ErrorCode::InvalidArgument, "well-exposedness sigma must be positive");
  if (levels < 0) raise(ErrorCode::InvalidArgument, "pyramid levels must be >= 0");
}

namespace {

struct Plane {
  int64_t h = 0, w = 0;
  std::vector<double> v;
  Plane() = default;
  Plane(int64_t hh, int64_t ww, double fill = 0) : h(hh), w(ww), v(static_cast<size_t>(hh * ww), fill) {}
  double& at(int64_t y, int64_t x) { return v[y * w + x]; }
  double at(int64_t y, int64_t x) const { return v[y * w + x]; }
};

int64_t mirror(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

Plane blur_decimate(const Plane& p) {
  const int64_t ho = (p.h + 1) / 2, wo = (p.w + 1) / 2;
  Plane tmp(p.h, wo);
  for (int64_t y = 0; y < p.h; ++y)
    for (int64_t x = 0; x < wo; ++x) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += kBinomial[k] * p.at(y, mirror(2 * x + k - 2, p.w));
      tmp.at(y, x) = s;
    }
  Plane out(ho, wo);
  for (int64_t y = 0; y < ho; ++y)
    for (int64_t x = 0; x < wo; ++x) {
      double s = 0;
      for (int k = 0; k < 5; ++k) s += kBinomial[k] * tmp.at(mirror(2 * y + k - 2, p.h), x);
      out.at(y, x) = s;
    }
  return out;
}

// Zero-insertion upsampling to (h, w) followed by the binomial filter (gain 2 per axis).
Plane expand(const Plane& p, int64_t h, int64_t w) {
  Plane tmp(p.h, w);
  for (int64_t y = 0; y < p.h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0;
      for (int k = 0; k < 5; ++k) {
        const int64_t xx = mirror(x + k - 2, w);
        if (xx % 2 == 0) s += 2 * kBinomial[k] * p.at(y, std::min(xx / 2, p.w - 1));
      }
      tmp.at(y, x) = s;
    }
  Plane out(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double s = 0;
      for (int k = 0; k < 5; ++k) {
        const int64_t yy = mirror(y + k - 2, h);
        if (yy % 2 == 0) s += 2 * kBinomial[k] * tmp.at(std::min(yy / 2, p.h - 1), x);
      }
      out.at(y, x) = s;
    }
  return out;
}

std::vector<Plane> gaussian_pyramid(Plane p, int levels) {
  std::vector<Plane> pyr;
  pyr.push_back(std::move(p));
  for (int l = 1; l < levels; ++l) pyr.push_back(blur_decimate(pyr.back()));
  return pyr;
}

std::vector<Plane> laplacian_pyramid(const Plane& p, int levels) {
  std::vector<Plane> g = gaussian_pyramid(p, levels);
  std::vector<Plane> lap(g.size());
  for (size_t l = 0; l + 1 < g.size(); ++l) {
    Plane up = expand(g[l + 1], g[l].h, g[l].w);
    lap[l] = g[l];
    for (size_t i = 0; i < lap[l].v.size(); ++i) lap[l].v[i] -= up.v[i];
  }
  lap.back() = g.back();
  return lap;
}

Plane channel_plane(const Tensor<float>& img, int64_t c) {
  Plane p(img.dim(1), img.dim(2));
  const auto d = img.data();
  std::copy(d.begin() + c * p.h * p.w, d.begin() + (c + 1) * p.h * p.w, p.v.begin());
  return p;
}

void check_rgb(const Tensor<float>& img, const char* op) {
  if (img.ndim() != 3 || img.dim(0) != 3)
    raise(ErrorCode::ShapeMismatch, op, ": expected 3 x H x W, got ", shape_str(img.shape()));
}

int auto_levels(int64_t h, int64_t w, int requested) {
  if (requested > 0) return requested;
  const int l = static_cast<int>(std::floor(std::log2(static_cast<double>(std::min(h, w))))) - 2;
  return std::max(1, l);
}

}  // namespace

Tensor<double> exposure_weights(const Tensor<float>& img, const FusionConfig& cfg) {
  check_rgb(img, "exposure_weights");
  const int64_t h = img.dim(1), w = img.dim(2), plane = h * w;
  const auto d = img.data();
  Plane luma(h, w);
  for (int64_t i = 0; i < plane; ++i) luma.v[i] = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  std::vector<double> out(static_cast<size_t>(plane));
  const double s2 = 2 * cfg.sigma * cfg.sigma;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      const double lap = luma.at(mirror(y - 1, h), x) + luma.at(mirror(y + 1, h), x) + luma.at(y, mirror(x - 1, w)) +
                         luma.at(y, mirror(x + 1, w)) - 4 * luma.at(y, x);
      const int64_t i = y * w + x;
      const double r = d[i], g = d[plane + i], b = d[2 * plane + i];
      const double mu = (r + g + b) / 3;
      const double sat = std::sqrt(((r - mu) * (r - mu) + (g - mu) * (g - mu) + (b - mu) * (b - mu)) / 3);
      const double expo = std::exp(-((r - 0.5) * (r - 0.5) + (g - 0.5) * (g - 0.5) + (b - 0.5) * (b - 0.5)) / s2);
      out[i] = std::pow(std::abs(lap), cfg.contrast_exponent) * std::pow(sat, cfg.saturation_exponent) *
               std::pow(expo, cfg.exposedness_exponent);
    }
  return Tensor<double>({1, h, w}, std::move(out));
}

std::vector<Tensor<double>> fusion_weights(const std::vector<Tensor<float>>& images, const FusionConfig& cfg) {
  if (images.empty()) raise(ErrorCode::InvalidArgument, "fusion needs at least one image");
  for (const auto& im : images) {
    check_rgb(im, "fusion_weights");
    if (im.shape() != images[0].shape()) raise(ErrorCode::ShapeMismatch, "fusion inputs differ in shape");
  }
  std::vector<std::vector<double>> raw;
  for (const auto& im : images) {
    auto wt = exposure_weights(im, cfg);
    raw.emplace_back(wt.data().begin(), wt.data().end());
    for (auto& v : raw.back()) v += 1e-12;
  }
  const size_t n = raw[0].size();
  for (size_t i = 0; i < n; ++i) {
    double s = 0;
    for (const auto& r : raw) s += r[i];
    for (auto& r : raw) r[i] /= s;
  }
  std::vector<Tensor<double>> out;
  for (auto& r : raw) out.emplace_back(Shape{1, images[0].dim(1), images[0].dim(2)}, std::move(r));
  return out;
}

Tensor<float> mertens_fuse(const std::vector<Tensor<float>>& images, const FusionConfig& cfg) {
  cfg.validate();
  const auto weights = fusion_weights(images, cfg);
  const int64_t h = images[0].dim(1), w = images[0].dim(2);
  const int levels = auto_levels(h, w, cfg.levels);
  std::vector<float> out(static_cast<size_t>(3 * h * w));
  std::vector<std::vector<Plane>> wpyr;
  for (const auto& wt : weights) {
    Plane p(h, w);
    std::copy(wt.data().begin(), wt.data().end(), p.v.begin());
    wpyr.push_back(gaussian_pyramid(std::move(p), levels));
  }
  for (int64_t c = 0; c < 3; ++c) {
    std::vector<Plane> blend;
    for (size_t k = 0; k < images.size(); ++k) {
      auto lap = laplacian_pyramid(channel_plane(images[k], c), levels);
      if (blend.empty())
        for (const auto& l : lap) blend.emplace_back(l.h, l.w);
      for (size_t l = 0; l < lap.size(); ++l)
        for (size_t i = 0; i < lap[l].v.size(); ++i) blend[l].v[i] += wpyr[k][l].v[i] * lap[l].v[i];
    }
    Plane r = blend.back();
    for (int l = static_cast<int>(blend.size()) - 2; l >= 0; --l) {
      Plane up = expand(r, blend[l].h, blend[l].w);
      for (size_t i = 0; i < up.v.size(); ++i) up.v[i] += blend[l].v[i];
      r = std::move(up);
    }
    for (int64_t i = 0; i < h * w; ++i) out[c * h * w + i] = static_cast<float>(std::clamp(r.v[i], 0.0, 1.0));
  }
  return Tensor<float>({3, h, w}, std::move(out));
}

std::vector<Tensor<float>> hdr_renders(const Tensor<float>& srgb, const IspModel& inverse, const IspModel& forward,
                                       const CanonicalParams& cano, const OpticalParams& opt, const FusionConfig& cfg) {
  cfg.validate();
  NoGradGuard no_grad;
  const Tensor<float> raw = inverse.inverse(srgb, cano, opt);
  std::vector<Tensor<float>> renders;
  for (double g : cfg.gains)
    renders.push_back(forward.forward(clamp(mul_scalar(raw, static_cast<float>(g)), 0.0f, 1.0f), cano, opt));
  return renders;
}

Tensor<float> hdr_reconstruct(const Tensor<float>& srgb, const IspModel& inverse, const IspModel& forward,
                              const CanonicalParams& cano, const OpticalParams& opt, const FusionConfig& cfg) {
  return mertens_fuse(hdr_renders(srgb, inverse, forward, cano, opt, cfg), cfg);
}

}  // namespace paramisp

#include "paramisp/canonet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "paramisp/error.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

int bayer_channel(BayerPattern pattern, int64_t y, int64_t x) noexcept {
  const int py = static_cast<int>(y & 1), px = static_cast<int>(x & 1);
  static constexpr int kTiles[4][2][2] = {
      {{0, 1}, {1, 2}},  // RGGB
      {{2, 1}, {1, 0}},  // BGGR
      {{1, 0}, {2, 1}},  // GRBG
      {{1, 2}, {0, 1}},  // GBRG
  };
  return kTiles[static_cast<int>(pattern)][py][px];
}

BayerPattern parse_bayer_pattern(std::string_view text) {
  std::string name(text);
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
  if (name == "RGGB") return BayerPattern::RGGB;
  if (name == "BGGR") return BayerPattern::BGGR;
  if (name == "GRBG") return BayerPattern::GRBG;
  if (name == "GBRG") return BayerPattern::GBRG;
  raise(ErrorCode::InvalidArgument, "unknown Bayer pattern '", text, "'");
}

const char* bayer_pattern_name(BayerPattern pattern) noexcept {
  switch (pattern) {
    case BayerPattern::RGGB: return "RGGB";
    case BayerPattern::BGGR: return "BGGR";
    case BayerPattern::GRBG: return "GRBG";
    case BayerPattern::GBRG: return "GBRG";
  }
  return "?";
}

double det3(const Mat3& m) noexcept {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 invert3(const Mat3& m) {
  const double d = det3(m);
  if (!(std::abs(d) > 1e-8)) raise(ErrorCode::Domain, "colour matrix is singular (det ", d, ")");
  const double s = 1.0 / d;
  return {(m[4] * m[8] - m[5] * m[7]) * s, (m[2] * m[7] - m[1] * m[8]) * s, (m[1] * m[5] - m[2] * m[4]) * s,
          (m[5] * m[6] - m[3] * m[8]) * s, (m[0] * m[8] - m[2] * m[6]) * s, (m[2] * m[3] - m[0] * m[5]) * s,
          (m[3] * m[7] - m[4] * m[6]) * s, (m[1] * m[6] - m[0] * m[7]) * s, (m[0] * m[4] - m[1] * m[3]) * s};
}

void CanonicalParams::validate() const {
  for (double g : wb_gains)
    if (!(g > 0) || !std::isfinite(g)) raise(ErrorCode::Domain, "white-balance gain must be positive, got ", g);
  for (double v : ccm)
    if (!std::isfinite(v)) raise(ErrorCode::Domain, "colour matrix has a non-finite entry");
  const double d = det3(ccm);
  if (!(std::abs(d) > 1e-8)) raise(ErrorCode::Domain, "colour matrix is singular (det ", d, ")");
}

namespace {

using Kernel = std::array<std::array<double, 5>, 5>;

// Coefficients are the published integers; all kernels sum to 8.
constexpr Kernel kGreenAtRB{{{0, 0, -1, 0, 0}, {0, 0, 2, 0, 0}, {-1, 2, 4, 2, -1}, {0, 0, 2, 0, 0}, {0, 0, -1, 0, 0}}};
constexpr Kernel kAtGreenRowNeighbours{
    {{0, 0, 0.5, 0, 0}, {0, -1, 0, -1, 0}, {-1, 4, 5, 4, -1}, {0, -1, 0, -1, 0}, {0, 0, 0.5, 0, 0}}};
constexpr Kernel kAtGreenColumnNeighbours{
    {{0, 0, -1, 0, 0}, {0, -1, 4, -1, 0}, {0.5, 0, 5, 0, 0.5}, {0, -1, 4, -1, 0}, {0, 0, -1, 0, 0}}};
constexpr Kernel kOppositeDiagonal{
    {{0, 0, -1.5, 0, 0}, {0, 2, 0, 2, 0}, {-1.5, 0, 6, 0, -1.5}, {0, 2, 0, 2, 0}, {0, 0, -1.5, 0, 0}}};

std::shared_ptr<const SparseMatrix> build_demosaic(BayerPattern pattern, int64_t h, int64_t w) {
  auto a = std::make_shared<SparseMatrix>();
  a->cols = h * w;
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        const int measured = bayer_channel(pattern, y, x);
        if (measured == c) {
          a->push(y * w + x, 1.0);
          a->end_row();
          continue;
        }
        const Kernel* k;
        if (c == 1) {
          k = &kGreenAtRB;
        } else if (measured == 1) {
          k = bayer_channel(pattern, y, x + 1) == c ? &kAtGreenRowNeighbours : &kAtGreenColumnNeighbours;
        } else {
          k = &kOppositeDiagonal;
        }
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const double coef = (*k)[dy + 2][dx + 2];
            if (coef == 0.0) continue;
            const int64_t yy = std::clamp<int64_t>(y + dy, 0, h - 1);
            const int64_t xx = std::clamp<int64_t>(x + dx, 0, w - 1);
            a->push(yy * w + xx, coef / 8.0);
          }
        a->end_row();
      }
  return a;
}

std::shared_ptr<const SparseMatrix> demosaic_operator(BayerPattern pattern, int64_t h, int64_t w) {
  static std::mutex mu;
  static std::map<std::tuple<int, int64_t, int64_t>, std::shared_ptr<const SparseMatrix>> cache;
  const auto key = std::make_tuple(static_cast<int>(pattern), h, w);
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (cache.size() >= 16) cache.clear();
  auto op = build_demosaic(pattern, h, w);
  cache.emplace(key, op);
  return op;
}

void require_even_mosaic(const Shape& s, int64_t channels, const char* op) {
  if (s.size() != 3 || s[0] != channels)
    raise(ErrorCode::ShapeMismatch, op, ": expected ", channels, " x H x W, got ", shape_str(s));
  if (s[1] % 2 || s[2] % 2) raise(ErrorCode::ShapeMismatch, op, ": odd dimensions ", shape_str(s));
}

void require_rgb(const Shape& s, const char* op) {
  if (s.size() != 3 || s[0] != 3) raise(ErrorCode::ShapeMismatch, op, ": expected 3 x H x W, got ", shape_str(s));
}

void check_gains(const std::array<double, 3>& g) {
  for (double v : g)
    if (!(v > 0) || !std::isfinite(v)) raise(ErrorCode::Domain, "white-balance gain must be positive, got ", v);
}

template <class T>
Tensor<T> channel_scale(const Tensor<T>& img, const std::array<T, 3>& s) {
  return mul(img, Tensor<T>({3, 1, 1}, {s[0], s[1], s[2]}));
}

template <class T>
Tensor<T> colour_transform(const Tensor<T>& img, const Mat3& m) {
  std::vector<T> mv(m.begin(), m.end());
  const int64_t h = img.dim(1), w = img.dim(2);
  Tensor<T> flat = reshape(img, {3, h * w});
  return reshape(matmul(Tensor<T>({3, 3}, std::move(mv)), flat), {3, h, w});
}

}  // namespace

template <class T>
Tensor<T> demosaic_malvar(const Tensor<T>& raw, BayerPattern pattern) {
  require_even_mosaic(raw.shape(), 1, "demosaic_malvar");
  const int64_t h = raw.dim(1), w = raw.dim(2);
  return clamp(sparse_apply(demosaic_operator(pattern, h, w), raw, {3, h, w}), T(0), T(1));
}

template <class T>
Tensor<T> mosaic(const Tensor<T>& rgb, BayerPattern pattern) {
  require_even_mosaic(rgb.shape(), 3, "mosaic");
  const int64_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<int64_t> idx(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) idx[y * w + x] = (bayer_channel(pattern, y, x) * h + y) * w + x;
  return gather(rgb, std::span<const int64_t>(idx), {1, h, w});
}

template <class T>
Tensor<T> apply_white_balance(const Tensor<T>& img, const std::array<double, 3>& gains) {
  require_rgb(img.shape(), "apply_white_balance");
  check_gains(gains);
  return channel_scale(img, {static_cast<T>(gains[0]), static_cast<T>(gains[1]), static_cast<T>(gains[2])});
}

template <class T>
Tensor<T> invert_white_balance(const Tensor<T>& img, const std::array<double, 3>& gains) {
  require_rgb(img.shape(), "invert_white_balance");
  check_gains(gains);
  return div(img, Tensor<T>({3, 1, 1}, {static_cast<T>(gains[0]), static_cast<T>(gains[1]), static_cast<T>(gains[2])}));
}

template <class T>
Tensor<T> apply_cst(const Tensor<T>& img, const Mat3& m) {
  require_rgb(img.shape(), "apply_cst");
  const double d = det3(m);
  if (!(std::abs(d) > 1e-8)) raise(ErrorCode::Domain, "apply_cst: singular matrix (det ", d, ")");
  return colour_transform(img, m);
}

template <class T>
Tensor<T> invert_cst(const Tensor<T>& img, const Mat3& m) {
  require_rgb(img.shape(), "invert_cst");
  return colour_transform(img, invert3(m));
}

template <class T>
Tensor<T> canonet_forward(const Tensor<T>& raw, const CanonicalParams& params) {
  params.validate();
  return apply_cst(apply_white_balance(demosaic_malvar(raw, params.pattern), params.wb_gains), params.ccm);
}

template <class T>
Tensor<T> canonet_inverse(const Tensor<T>& lin, const CanonicalParams& params) {
  params.validate();
  Tensor<T> cam = invert_white_balance(invert_cst(lin, params.ccm), params.wb_gains);
  return clamp(mosaic(cam, params.pattern), T(0), T(1));
}

#define PARAMISP_INSTANTIATE(T)                                                              \
  template Tensor<T> demosaic_malvar(const Tensor<T>&, BayerPattern);                        \
  template Tensor<T> mosaic(const Tensor<T>&, BayerPattern);                                 \
  template Tensor<T> apply_white_balance(const Tensor<T>&, const std::array<double, 3>&);    \
  template Tensor<T> invert_white_balance(const Tensor<T>&, const std::array<double, 3>&);   \
  template Tensor<T> apply_cst(const Tensor<T>&, const Mat3&);                               \
  template Tensor<T> invert_cst(const Tensor<T>&, const Mat3&);                              \
  template Tensor<T> canonet_forward(const Tensor<T>&, const CanonicalParams&);              \
  template Tensor<T> canonet_inverse(const Tensor<T>&, const CanonicalParams&);

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

}  // namespace paramisp

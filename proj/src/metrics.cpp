#include "paramisp/metrics.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "paramisp/error.hpp"

namespace paramisp {

namespace {

template <class T>
void check_pair(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    raise(ErrorCode::ShapeMismatch, op, ": shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()), " differ");
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double s = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Separable valid-mode filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& x, int64_t h, int64_t w, const std::array<double, kWin>& g) {
  const int64_t wo = w - kWin + 1, ho = h - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(h * wo));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t xo = 0; xo < wo; ++xo) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * x[y * w + xo + k];
      tmp[y * wo + xo] = s;
    }
  std::vector<double> out(static_cast<size_t>(ho * wo));
  for (int64_t yo = 0; yo < ho; ++yo)
    for (int64_t xo = 0; xo < wo; ++xo) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * tmp[(yo + k) * wo + xo];
      out[yo * wo + xo] = s;
    }
  return out;
}

}  // namespace

template <class T>
double psnr(const Tensor<T>& pred, const Tensor<T>& ref) {
  check_pair(pred, ref, "psnr");
  const auto a = pred.data(), b = ref.data();
  double se = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse < 1e-10) return 100.0;
  return 10.0 * std::log10(1.0 / mse);
}

template <class T>
double ssim(const Tensor<T>& pred, const Tensor<T>& ref) {
  check_pair(pred, ref, "ssim");
  if (pred.ndim() != 3) raise(ErrorCode::ShapeMismatch, "ssim: expected C x H x W, got ", shape_str(pred.shape()));
  const int64_t c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
  if (h < kWin || w < kWin) raise(ErrorCode::ShapeMismatch, "ssim: image ", shape_str(pred.shape()), " smaller than the 11x11 window");
  static const auto g = gaussian_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int64_t plane = h * w;
  double total = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> x(static_cast<size_t>(plane)), y(x.size()), xx(x.size()), yy(x.size()), xy(x.size());
    for (int64_t i = 0; i < plane; ++i) {
      x[i] = pred.data()[ch * plane + i];
      y[i] = ref.data()[ch * plane + i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    double acc = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(c);
}

template double psnr(const Tensor<float>&, const Tensor<float>&);
template double psnr(const Tensor<double>&, const Tensor<double>&);
template double ssim(const Tensor<float>&, const Tensor<float>&);
template double ssim(const Tensor<double>&, const Tensor<double>&);

}  // namespace paramisp

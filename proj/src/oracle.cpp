#include "paramisp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "paramisp/error.hpp"
#include "paramisp/globalnet.hpp"
#include "paramisp/io.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

OracleCamera OracleCamera::make(uint64_t seed, bool iso_drift) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  OracleCamera cam;
  cam.name = "oracle-" + std::to_string(seed);
  cam.iso_drift = iso_drift;
  cam.cano.pattern = static_cast<BayerPattern>(seed % 4);
  cam.cano.wb_gains = {in(1.8, 2.2), 1.0, in(1.45, 1.75)};
  for (int r = 0; r < 3; ++r) {
    double off = 0;
    for (int c = 0; c < 3; ++c)
      if (c != r) {
        cam.cano.ccm[r * 3 + c] = -in(0.05, 0.35);
        off += cam.cano.ccm[r * 3 + c];
      }
    cam.cano.ccm[r * 4] = 1.0 - off;  // rows sum to one
  }
  for (int r = 0; r < 3; ++r) {
    double* row = cam.quad.data() + r * 10;
    for (int k = 0; k < 6; ++k) row[k] = in(-0.04, 0.04);
    for (int c = 0; c < 3; ++c) row[6 + c] = (c == r ? 1.0 : 0.0) + in(-0.05, 0.05);
    row[9] = 0.0;
  }
  for (int c = 0; c < 3; ++c) {
    cam.alpha[c] = 1.0;
    cam.beta[c] = in(0.01, 0.05);
    cam.gamma[c] = in(0.40, 0.50);
  }
  return cam;
}

std::array<double, 3> OracleCamera::gamma_at(double iso) const {
  if (!iso_drift) return gamma;
  const double t = std::clamp(std::log(iso / 100.0) / std::log(64.0), 0.0, 1.0);
  const double s = std::exp(drift_strength * (t - 0.5));
  return {gamma[0] * s, gamma[1] * s, gamma[2] * s};
}

Tensor<double> OracleCamera::tone(const Tensor<double>& lin, double iso) const {
  const auto g = gamma_at(iso);
  Tensor<double> w({3, 10}, std::vector<double>(quad.begin(), quad.end()));
  auto coeff = [](const std::array<double, 3>& v) { return Tensor<double>({3, 1, 1}, {v[0], v[1], v[2]}); };
  return clamp(gamma_correction(quadratic_transform(lin, w), coeff(alpha), coeff(beta), coeff(g)), 0.0, 1.0);
}

Tensor<double> synth_scene(int size, std::mt19937_64& rng, bool highlights) {
  if (size < 4 || size % 2) raise(ErrorCode::InvalidArgument, "scene size must be even and >= 4, got ", size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int64_t n = size, plane = n * n;
  std::vector<double> img(static_cast<size_t>(3 * plane));
  // Bilinear gradient between random corner colours.
  std::array<std::array<double, 3>, 4> corner;
  for (auto& c : corner)
    for (auto& v : c) v = 0.03 + 0.6 * u(rng);
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x) {
      const double fy = static_cast<double>(y) / (n - 1), fx = static_cast<double>(x) / (n - 1);
      for (int c = 0; c < 3; ++c)
        img[c * plane + y * n + x] = (1 - fy) * ((1 - fx) * corner[0][c] + fx * corner[1][c]) +
                                     fy * ((1 - fx) * corner[2][c] + fx * corner[3][c]);
    }
  // Colour patches: rectangles and discs.
  const int patches = 3 + static_cast<int>(u(rng) * 5);
  for (int p = 0; p < patches; ++p) {
    std::array<double, 3> col{0.02 + 0.8 * u(rng), 0.02 + 0.8 * u(rng), 0.02 + 0.8 * u(rng)};
    const double cy = u(rng) * n, cx = u(rng) * n, ry = 2 + u(rng) * n / 4, rx = 2 + u(rng) * n / 4;
    const bool disc = u(rng) < 0.5;
    for (int64_t y = 0; y < n; ++y)
      for (int64_t x = 0; x < n; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside)
          for (int c = 0; c < 3; ++c) img[c * plane + y * n + x] = col[c];
      }
  }
  // Multiplicative texture from a few random sinusoids.
  const double amp = 0.15 * u(rng);
  std::array<std::array<double, 3>, 3> waves;
  for (auto& w : waves) w = {(u(rng) - 0.5) * 1.2, (u(rng) - 0.5) * 1.2, u(rng) * 6.283};
  for (int64_t y = 0; y < n; ++y)
    for (int64_t x = 0; x < n; ++x) {
      double t = 0;
      for (const auto& w : waves) t += std::sin(w[0] * y + w[1] * x + w[2]);
      const double m = 1.0 + amp * t / 3.0;
      for (int c = 0; c < 3; ++c) img[c * plane + y * n + x] *= m;
    }
  if (highlights) {
    const int spots = 1 + static_cast<int>(u(rng) * 3);
    for (int s = 0; s < spots; ++s) {
      const double cy = u(rng) * n, cx = u(rng) * n, r = 3 + u(rng) * n / 6, peak = 1.5 + 2.0 * u(rng);
      for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x) {
          const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (r * r);
          if (d2 < 1.0)
            for (int c = 0; c < 3; ++c) img[c * plane + y * n + x] += peak * (1.0 - d2);
        }
    }
  }
  for (auto& v : img) v = std::max(v, 0.0);
  return Tensor<double>({3, n, n}, std::move(img));
}

OpticalParams sample_optical_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto log_uniform = [&](double lo, double hi) { return std::exp(std::log(lo) + u(rng) * (std::log(hi) - std::log(lo))); };
  static constexpr double kStops[] = {1.8, 2.8, 4.0, 5.6, 8.0, 11.0, 16.0};
  OpticalParams p;
  p.exposure_time_s = log_uniform(1.0 / 4000.0, 1.0 / 15.0);
  p.iso = log_uniform(100.0, 6400.0);
  p.f_number = kStops[std::min<size_t>(6, static_cast<size_t>(u(rng) * 7))];
  p.focal_length_mm = log_uniform(18.0, 200.0);
  return p;
}

Sample render_oracle_pair(const OracleCamera& cam, const Tensor<double>& scene, const OpticalParams& opt,
                          std::mt19937_64* noise_rng, const std::string& id) {
  const int64_t h = scene.dim(1), w = scene.dim(2);
  NoGradGuard no_grad;
  // Scene is white-balanced linear sRGB; take it back to camera space.
  Tensor<double> cam_rgb = invert_white_balance(invert_cst(scene, cam.cano.ccm), cam.cano.wb_gains);
  Tensor<double> mos = mosaic(cam_rgb, cam.cano.pattern);
  std::vector<uint16_t> codes(static_cast<size_t>(h * w));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = 0.002 * std::sqrt(opt.iso / 100.0);
  const auto mv = mos.data();
  for (size_t i = 0; i < codes.size(); ++i) {
    double v = mv[i];
    if (noise_rng) v += sigma * gauss(*noise_rng);
    codes[i] = quantize_raw_value(v, cam.black_level, cam.white_level);
  }
  std::vector<float> rawf(codes.size());
  std::vector<double> rawd(codes.size());
  for (size_t i = 0; i < codes.size(); ++i) {
    rawf[i] = normalize_raw_value(codes[i], cam.black_level, cam.white_level);
    rawd[i] = rawf[i];
  }
  Tensor<double> raw_d({1, h, w}, std::move(rawd));
  Tensor<double> srgb_d = cam.tone(canonet_forward(raw_d, cam.cano), opt.iso);
  Sample s;
  s.id = id;
  s.camera = cam.name;
  s.raw = Tensor<float>({1, h, w}, std::move(rawf));
  std::vector<float> sv(static_cast<size_t>(srgb_d.numel()));
  const auto sd = srgb_d.data();
  for (size_t i = 0; i < sv.size(); ++i)
    sv[i] = static_cast<float>(static_cast<double>(std::lround(std::clamp(sd[i], 0.0, 1.0) * 65535.0)) / 65535.0);
  s.srgb = Tensor<float>({3, h, w}, std::move(sv));
  s.meta.cano = cam.cano;
  s.meta.opt = opt;
  s.meta.black_level = cam.black_level;
  s.meta.white_level = cam.white_level;
  return s;
}

Dataset make_oracle_dataset(const OracleCamera& cam, const OracleOptions& options) {
  if (options.count < 1) raise(ErrorCode::InvalidArgument, "oracle dataset needs at least one pair");
  if (!(options.val_fraction >= 0 && options.val_fraction < 1))
    raise(ErrorCode::InvalidArgument, "validation fraction must be in [0, 1)");
  std::mt19937_64 rng(options.seed);
  std::mt19937_64 noise_rng(options.seed ^ 0xA5A5A5A5ULL);
  std::vector<Sample> all;
  for (int i = 0; i < options.count; ++i) {
    Tensor<double> scene = synth_scene(options.size, rng, options.highlights);
    const OpticalParams opt = sample_optical_params(rng);
    char id[32];
    std::snprintf(id, sizeof id, "%04d", i);
    all.push_back(render_oracle_pair(cam, scene, opt, options.noise ? &noise_rng : nullptr, id));
  }
  std::vector<size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(options.seed + 0x5151);
  std::shuffle(order.begin(), order.end(), split_rng);
  const size_t n_val = static_cast<size_t>(std::round(options.val_fraction * options.count));
  std::vector<bool> is_val(all.size(), false);
  for (size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  Dataset d;
  for (size_t i = 0; i < all.size(); ++i) (is_val[i] ? d.val : d.train).push_back(std::move(all[i]));
  return d;
}

Dataset write_oracle_dataset(const OracleCamera& cam, const OracleOptions& options, const std::string& dir) {
  Dataset d = make_oracle_dataset(cam, options);
  save_dataset(d, dir);
  return d;
}

}  // namespace paramisp

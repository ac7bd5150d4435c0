#include "paramisp/paramnet.hpp"

#include <algorithm>
#include <cmath>

#include "paramisp/error.hpp"
#include "paramisp/ops.hpp"

namespace paramisp {

void OpticalParams::validate() const {
  const auto v = values();
  for (int i = 0; i < kOpticalCount; ++i)
    if (!(v[i] > 0) || !std::isfinite(v[i]))
      raise(ErrorCode::Domain, "optical parameter ", kOpticalNames[i], " must be positive and finite, got ", v[i]);
}

namespace {

// Bounds used for the default ranges: exposure, ISO, f-number, focal length.
constexpr Range kDefaultBounds[kOpticalCount] = {{1.0 / 8000.0, 30.0}, {50.0, 25600.0}, {1.0, 32.0}, {2.0, 800.0}};

double unit_log(double x, const Range& lr) {
  const double span = lr[1] - lr[0];
  return span > 0 ? (std::log(x) - lr[0]) / span : 0.5;
}

void fit_ranges(EqualizationConfig& cfg, const std::vector<std::array<double, kOpticalCount>>& samples) {
  for (int p = 0; p < kOpticalCount; ++p) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : samples) {
      lo = std::min(lo, std::log(s[p]));
      hi = std::max(hi, std::log(s[p]));
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    cfg.log_range[p] = {lo, hi};
    std::array<Range, kEqualizedDim> r;
    r.fill({INFINITY, -INFINITY});
    for (const auto& s : samples) {
      const auto f = equalize_raw(s[p], cfg, p);
      for (int k = 0; k < kEqualizedDim; ++k) {
        r[k][0] = std::min(r[k][0], f[k]);
        r[k][1] = std::max(r[k][1], f[k]);
      }
    }
    for (auto& rk : r)
      if (rk[1] - rk[0] < 1e-12) {
        rk[0] -= 0.5;
        rk[1] += 0.5;
      }
    cfg.ranges[p] = r;
  }
}

}  // namespace

EqualizationConfig EqualizationConfig::defaults() {
  EqualizationConfig cfg;
  constexpr int kSteps = 4096;
  std::vector<std::array<double, kOpticalCount>> samples(kSteps + 1);
  for (int i = 0; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    for (int p = 0; p < kOpticalCount; ++p) {
      const double a = std::log(kDefaultBounds[p][0]), b = std::log(kDefaultBounds[p][1]);
      samples[i][p] = std::exp(a + t * (b - a));
    }
  }
  fit_ranges(cfg, samples);
  return cfg;
}

EqualizationConfig EqualizationConfig::fit(std::span<const OpticalParams> samples) {
  if (samples.empty()) raise(ErrorCode::InvalidArgument, "EqualizationConfig::fit: no samples");
  std::vector<std::array<double, kOpticalCount>> v;
  for (const auto& s : samples) {
    s.validate();
    v.push_back(s.values());
  }
  EqualizationConfig cfg;
  fit_ranges(cfg, v);
  return cfg;
}

void EqualizationConfig::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (!(c_values[i] > 0)) raise(ErrorCode::InvalidArgument, "equalization c values must be positive");
    for (int j = 0; j < i; ++j)
      if (c_values[i] == c_values[j]) raise(ErrorCode::InvalidArgument, "equalization c values must be distinct");
  }
  for (int p = 0; p < kOpticalCount; ++p) {
    if (!(log_range[p][1] > log_range[p][0]))
      raise(ErrorCode::InvalidArgument, "equalization log range for ", kOpticalNames[p], " is empty");
    for (int k = 0; k < kEqualizedDim; ++k)
      if (!(ranges[p][k][1] > ranges[p][k][0]))
        raise(ErrorCode::InvalidArgument, "equalization range ", k, " for ", kOpticalNames[p], " is empty");
  }
}

std::array<double, kEqualizedDim> equalize_raw(double x, const EqualizationConfig& cfg, int param_id) {
  if (!(x > 0) || !std::isfinite(x))
    raise(ErrorCode::Domain, "equalize_parameter: ", kOpticalNames[param_id], " must be positive, got ", x);
  const double lx = std::log(x);
  const double u = cfg.normalize ? unit_log(x, cfg.log_range[param_id]) : x;
  const auto& c = cfg.c_values;
  return {x,
          1.0 / x,
          std::sqrt(x),
          1.0 / std::sqrt(x),
          std::pow(x, 0.25),
          std::pow(x, -0.25),
          lx,
          std::sin(lx),
          std::cos(lx),
          std::sin(c[0] * u),
          std::cos(c[0] * u),
          std::sin(c[1] * u),
          std::cos(c[1] * u),
          std::sin(c[2] * u),
          std::cos(c[2] * u)};
}

std::array<double, kEqualizedDim> equalize_parameter(double x, const EqualizationConfig& cfg, int param_id) {
  if (param_id < 0 || param_id >= kOpticalCount) raise(ErrorCode::InvalidArgument, "bad optical parameter id");
  auto f = equalize_raw(x, cfg, param_id);
  if (!cfg.normalize) return f;
  for (int k = 0; k < kEqualizedDim; ++k) {
    const auto& r = cfg.ranges[param_id][k];
    f[k] = std::clamp((f[k] - r[0]) / (r[1] - r[0]), 0.0, 1.0);
  }
  return f;
}

std::array<bool, kOpticalCount> param_dropout_mask(double p, std::mt19937_64& rng, bool training) {
  if (!(p >= 0 && p <= 1)) raise(ErrorCode::InvalidArgument, "dropout probability ", p, " outside [0,1]");
  std::array<bool, kOpticalCount> keep;
  keep.fill(true);
  if (!training) return keep;
  std::bernoulli_distribution drop(p);
  for (auto& k : keep) k = !drop(rng);
  return keep;
}

template <class T>
ParamNet<T>::ParamNet(ParamStore<T>& store, const std::string& prefix, int proj_dim, int z_dim, std::mt19937_64& rng)
    : z_dim_(z_dim) {
  for (int i = 0; i < kOpticalCount; ++i)
    proj_[i] = make_linear(store, prefix + ".proj_" + kOpticalNames[i], kEqualizedDim, proj_dim, rng, Init::He, false);
  fc1_ = make_linear(store, prefix + ".fc1", proj_dim, z_dim, rng);
  fc2_ = make_linear(store, prefix + ".fc2", z_dim, z_dim, rng);
}

template <class T>
Tensor<T> ParamNet<T>::forward_branches(const std::array<Tensor<T>, kOpticalCount>& branches) const {
  Tensor<T> s = proj_[0](branches[0]);
  for (int i = 1; i < kOpticalCount; ++i) s = add(s, proj_[i](branches[i]));
  return fc2_(leaky_relu(fc1_(s)));
}

template <class T>
Tensor<T> ParamNet<T>::forward(const OpticalParams& params, const EqualizationConfig& cfg, const RunContext& ctx) const {
  params.validate();
  std::array<bool, kOpticalCount> keep;
  keep.fill(true);
  if (ctx.training) {
    if (!ctx.rng) raise(ErrorCode::InvalidArgument, "ParamNet: training mode needs a random generator");
    keep = param_dropout_mask(ctx.dropout_p, *ctx.rng, true);
  }
  const auto v = params.values();
  std::array<Tensor<T>, kOpticalCount> branches;
  for (int i = 0; i < kOpticalCount; ++i) {
    std::vector<T> e(kEqualizedDim, T(0));
    if (keep[i]) {
      const auto f = equalize_parameter(v[i], cfg, i);
      std::transform(f.begin(), f.end(), e.begin(), [](double d) { return static_cast<T>(d); });
    }
    branches[i] = Tensor<T>({kEqualizedDim, 1}, std::move(e));
  }
  return forward_branches(branches);
}

template class ParamNet<float>;
template class ParamNet<double>;

}  // namespace paramisp

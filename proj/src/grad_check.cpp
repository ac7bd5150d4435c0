#include "paramisp/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "paramisp/error.hpp"

namespace paramisp {

namespace {

double eval_scalar(const std::function<Tensor<double>()>& f) {
  Tensor<double> out = f();
  if (out.numel() != 1) raise(ErrorCode::ShapeMismatch, "grad_check: function must return one element");
  const double v = out.item();
  if (!std::isfinite(v)) raise(ErrorCode::NonFinite, "grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& options) {
  if (!(options.eps >= 1e-7 && options.eps <= 1e-3))
    raise(ErrorCode::InvalidArgument, "grad_check: eps ", options.eps, " outside [1e-7, 1e-3]");
  std::vector<Tensor<double>> ps = params;
  for (auto& p : ps) {
    if (!p.requires_grad()) raise(ErrorCode::InvalidArgument, "grad_check: parameter does not require grad");
    p.zero_grad();
  }
  {
    Tensor<double> root = f();
    if (!std::isfinite(root.item())) raise(ErrorCode::NonFinite, "grad_check: non-finite function value");
    backward(root);
  }
  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (size_t pi = 0; pi < ps.size(); ++pi) {
    auto& p = ps[pi];
    const int64_t n = p.numel();
    std::vector<double> analytic(static_cast<size_t>(n), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<int64_t> coords(static_cast<size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<size_t>(options.max_coords_per_param));
    }
    for (int64_t idx : coords) {
      auto data = p.data_mut();
      const double orig = data[idx];
      data[idx] = orig + options.eps;
      const double up = eval_scalar(f);
      data[idx] = orig - options.eps;
      const double down = eval_scalar(f);
      data[idx] = orig;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[idx];
      if (!std::isfinite(a)) raise(ErrorCode::NonFinite, "grad_check: non-finite analytic gradient");
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++result.coords_checked;
      if (err > result.max_rel_error || result.worst_index < 0) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_param = pi;
          result.worst_index = idx;
        }
      }
    }
  }
  return result;
}

}  // namespace paramisp

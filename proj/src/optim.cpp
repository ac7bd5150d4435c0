#include "paramisp/optim.hpp"

#include <cmath>

#include "paramisp/error.hpp"

namespace paramisp {

template <class T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.lr >= 0) || !(options_.beta1 >= 0 && options_.beta1 < 1) || !(options_.beta2 >= 0 && options_.beta2 < 1) ||
      !(options_.eps > 0) || !(options_.weight_decay >= 0))
    raise(ErrorCode::InvalidArgument, "AdamW: invalid hyperparameters");
  for (const auto& p : params_) {
    if (!p.defined() || !p.requires_grad()) raise(ErrorCode::InvalidArgument, "AdamW: parameter does not require grad");
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

template <class T>
void AdamW<T>::step() {
  for (size_t i = 0; i < params_.size(); ++i)
    if (!params_[i].has_grad())
      raise(ErrorCode::InvalidArgument, "AdamW: parameter ", i, " ", shape_str(params_[i].shape()), " has no gradient");
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = options_.lr;
  const double decay = 1.0 - lr * options_.weight_decay;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].data_mut();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      const double updated = static_cast<double>(p[j]) * decay - lr * mhat / (std::sqrt(vhat) + options_.eps);
      p[j] = static_cast<T>(updated);
    }
  }
}

template <class T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace paramisp

#pragma once

#include <cstdint>
#include <vector>

#include "paramisp/tensor.hpp"

namespace paramisp {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
template <class T>
class AdamW {
 public:
  explicit AdamW(std::vector<Tensor<T>> params, AdamWOptions options = {});

  /// One update from the gradients currently stored on the parameters.
  void step();
  void zero_grad();

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  int64_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  const std::vector<Tensor<T>>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamWOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  int64_t step_ = 0;
};

}  // namespace paramisp

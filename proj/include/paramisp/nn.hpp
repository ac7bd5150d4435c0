#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "paramisp/ops.hpp"
#include "paramisp/tensor.hpp"

namespace paramisp {

/// Ordered, named parameter registry. Order is the serialization order.
template <class T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t);
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  size_t size() const { return tensors_.size(); }
  const Tensor<T>* find(const std::string& name) const;
  int64_t element_count() const;
  /// Tensors whose name starts with prefix.
  std::vector<Tensor<T>> with_prefix(const std::string& prefix) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

enum class Init { He, Zero };

template <class T>
struct Conv2d {
  Tensor<T> weight;  // O x C x k x k
  Tensor<T> bias;    // O (may be undefined)
  int stride = 1;
  int padding = 0;
  PadMode mode = PadMode::Zero;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding, mode); }
};

template <class T>
struct Linear {
  Tensor<T> weight;  // out x in
  Tensor<T> bias;    // out x 1 (may be undefined)

  /// x is in x 1.
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <class T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, int in, int out, int k, int stride,
                    std::mt19937_64& rng, Init init = Init::He, bool bias = true);

template <class T>
Linear<T> make_linear(ParamStore<T>& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                      Init init = Init::He, bool bias = true);

/// He-normal fill for a leaky-relu(0.2) fan-in.
template <class T>
void he_fill(Tensor<T>& t, int64_t fan_in, std::mt19937_64& rng);

}  // namespace paramisp

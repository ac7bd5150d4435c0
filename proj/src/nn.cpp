#include "paramisp/nn.hpp"

#include <cmath>

#include "paramisp/error.hpp"

namespace paramisp {

template <class T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (find(name)) raise(ErrorCode::InvalidArgument, "duplicate parameter name ", name);
  t.set_requires_grad(true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

template <class T>
const Tensor<T>* ParamStore<T>::find(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return &tensors_[i];
  return nullptr;
}

template <class T>
int64_t ParamStore<T>::element_count() const {
  int64_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <class T>
std::vector<Tensor<T>> ParamStore<T>::with_prefix(const std::string& prefix) const {
  std::vector<Tensor<T>> out;
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i].compare(0, prefix.size(), prefix) == 0) out.push_back(tensors_[i]);
  return out;
}

template <class T>
void he_fill(Tensor<T>& t, int64_t fan_in, std::mt19937_64& rng) {
  const double std = std::sqrt(2.0 / (1.04 * static_cast<double>(fan_in)));
  std::normal_distribution<double> dist(0.0, std);
  for (auto& v : t.data_mut()) v = static_cast<T>(dist(rng));
}

template <class T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  Tensor<T> y = matmul(weight, x);
  return bias.defined() ? add(y, bias) : y;
}

template <class T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, int in, int out, int k, int stride,
                    std::mt19937_64& rng, Init init, bool bias) {
  Conv2d<T> c;
  c.stride = stride;
  c.padding = k / 2;
  Tensor<T> w = Tensor<T>::zeros({out, in, k, k});
  if (init == Init::He) he_fill(w, static_cast<int64_t>(in) * k * k, rng);
  c.weight = store.add(name + ".weight", w);
  if (bias) c.bias = store.add(name + ".bias", Tensor<T>::zeros({out}));
  return c;
}

template <class T>
Linear<T> make_linear(ParamStore<T>& store, const std::string& name, int in, int out, std::mt19937_64& rng,
                      Init init, bool bias) {
  Linear<T> l;
  Tensor<T> w = Tensor<T>::zeros({out, in});
  if (init == Init::He) he_fill(w, in, rng);
  l.weight = store.add(name + ".weight", w);
  if (bias) l.bias = store.add(name + ".bias", Tensor<T>::zeros({out, 1}));
  return l;
}

#define PARAMISP_INSTANTIATE(T)                                                                                  \
  template class ParamStore<T>;                                                                                  \
  template struct Linear<T>;                                                                                     \
  template void he_fill(Tensor<T>&, int64_t, std::mt19937_64&);                                                  \
  template Conv2d<T> make_conv(ParamStore<T>&, const std::string&, int, int, int, int, std::mt19937_64&, Init,   \
                               bool);                                                                            \
  template Linear<T> make_linear(ParamStore<T>&, const std::string&, int, int, std::mt19937_64&, Init, bool);

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

}  // namespace paramisp

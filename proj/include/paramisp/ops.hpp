#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "paramisp/tensor.hpp"

namespace paramisp {

enum class PadMode { Zero, Replicate, Reflect };

/// Fixed linear operator in compressed-row form. Used for demosaicing,
/// mosaicing and index gathers; backward applies the transpose.
struct SparseMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int64_t> row_ptr{0};
  std::vector<int64_t> col_idx;
  std::vector<double> values;

  void push(int64_t col, double value) {
    col_idx.push_back(col);
    values.push_back(value);
  }
  void end_row() {
    row_ptr.push_back(static_cast<int64_t>(col_idx.size()));
    ++rows;
  }
};

// Broadcasting binary ops (numpy rules, trailing axes aligned).
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
/// base^exponent; base must be non-negative.
template <class T> Tensor<T> pow(const Tensor<T>& base, const Tensor<T>& exponent);

template <class T> Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <class T> Tensor<T> mul_scalar(const Tensor<T>& x, T c);
template <class T> Tensor<T> pow_scalar(const Tensor<T>& x, T exponent);

template <class T> Tensor<T> neg(const Tensor<T>& x);
template <class T> Tensor<T> exp(const Tensor<T>& x);
template <class T> Tensor<T> log(const Tensor<T>& x);
template <class T> Tensor<T> abs(const Tensor<T>& x);
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2));
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> softplus(const Tensor<T>& x);
template <class T> Tensor<T> sqrt(const Tensor<T>& x);
template <class T> Tensor<T> sin(const Tensor<T>& x);
template <class T> Tensor<T> cos(const Tensor<T>& x);
/// Zero gradient outside [lo, hi].
template <class T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Cross-correlation of a C x H x W input with an O x C x k x k kernel.
/// `bias` may be undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding, PadMode mode = PadMode::Zero);

template <class T> Tensor<T> max_pool2x2(const Tensor<T>& x);
template <class T> Tensor<T> global_avg_pool(const Tensor<T>& x);  // C x 1 x 1
template <class T> Tensor<T> global_max_pool(const Tensor<T>& x);  // C x 1 x 1
template <class T> Tensor<T> channel_mean(const Tensor<T>& x);     // 1 x H x W
template <class T> Tensor<T> channel_max(const Tensor<T>& x);      // 1 x H x W
template <class T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);

template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Concatenation along axis 0.
template <class T> Tensor<T> concat(std::span<const Tensor<T>> parts);
template <class T> Tensor<T> concat(std::initializer_list<Tensor<T>> parts) {
  return concat(std::span<const Tensor<T>>(parts.begin(), parts.size()));
}
/// Rows [begin, end) along axis 0.
template <class T> Tensor<T> slice(const Tensor<T>& x, int64_t begin, int64_t end);
/// Spatial window of a C x H x W tensor.
template <class T> Tensor<T> crop(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w);
/// Mirror padding (edge not repeated) of a C x H x W tensor. Pads wider than
/// the image keep mirroring back and forth.
template <class T>
Tensor<T> pad_reflect(const Tensor<T>& x, int64_t top, int64_t bottom, int64_t left, int64_t right);

/// y = A x over the flattened input, reshaped to `out_shape`.
template <class T>
Tensor<T> sparse_apply(std::shared_ptr<const SparseMatrix> a, const Tensor<T>& x, Shape out_shape);
/// Flat gather: out[i] = x[indices[i]].
template <class T> Tensor<T> gather(const Tensor<T>& x, std::span<const int64_t> indices, Shape out_shape);

/// Triangular soft histogram: C x H x W in [0,1] -> (C*bins) x H x W with
/// h_b = max(0, 1 - |x - (b + 0.5)/bins| * bins).
template <class T> Tensor<T> soft_histogram(const Tensor<T>& x, int bins);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace paramisp

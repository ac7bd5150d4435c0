#include "paramisp/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "blas.hpp"
#include "paramisp/error.hpp"

namespace paramisp {

namespace {

template <class T>
using NodeT = detail::Node<T>;

template <class T>
using BackwardFn = std::function<void(NodeT<T>&)>;

template <class T>
void check_finite(const char* op, const std::vector<T>& v) {
  for (size_t i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) raise(ErrorCode::NonFinite, op, ": non-finite output at index ", i, " (", v[i], ")");
}

template <class T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                 BackwardFn<T> backward) {
  check_finite(op, data);
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = detail::next_seq();
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled())
    for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (needs_grad) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (const auto& t : inputs) node->inputs.push_back(t.node_ptr());
  }
  return Tensor<T>::from_node(std::move(node));
}

// Gradient buffer of input i, or null when that input is not differentiated.
template <class T>
std::vector<T>* input_grad(NodeT<T>& self, size_t i) {
  auto& in = *self.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

template <class T>
const std::vector<T>& input_data(const NodeT<T>& self, size_t i) {
  return self.inputs[i]->data;
}

struct Broadcast {
  Shape out;
  std::array<int64_t, kMaxRank> dims{};
  std::array<int64_t, kMaxRank> stride_a{};
  std::array<int64_t, kMaxRank> stride_b{};
  bool same = false;
};

std::array<int64_t, kMaxRank> padded(const Shape& s) {
  std::array<int64_t, kMaxRank> p{1, 1, 1, 1};
  const size_t off = kMaxRank - s.size();
  for (size_t i = 0; i < s.size(); ++i) p[off + i] = s[i];
  return p;
}

std::array<int64_t, kMaxRank> broadcast_strides(const std::array<int64_t, kMaxRank>& dims,
                                                const std::array<int64_t, kMaxRank>& out) {
  std::array<int64_t, kMaxRank> st{};
  int64_t acc = 1;
  for (int i = kMaxRank - 1; i >= 0; --i) {
    st[i] = (dims[i] == 1 && out[i] != 1) ? 0 : acc;
    acc *= dims[i];
  }
  return st;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    bc.same = true;
    return bc;
  }
  const auto pa = padded(a);
  const auto pb = padded(b);
  for (int i = 0; i < kMaxRank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
      raise(ErrorCode::ShapeMismatch, op, ": shapes ", shape_str(a), " and ", shape_str(b), " do not broadcast");
    bc.dims[i] = std::max(pa[i], pb[i]);
  }
  const size_t rank = std::max(a.size(), b.size());
  bc.out.assign(bc.dims.begin() + (kMaxRank - rank), bc.dims.end());
  bc.stride_a = broadcast_strides(pa, bc.dims);
  bc.stride_b = broadcast_strides(pb, bc.dims);
  return bc;
}

template <class F>
void for_each_broadcast(const Broadcast& bc, int64_t n, F&& f) {
  if (bc.same) {
    for (int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const auto& d = bc.dims;
  const auto& sa = bc.stride_a;
  const auto& sb = bc.stride_b;
  int64_t o = 0;
  for (int64_t i0 = 0; i0 < d[0]; ++i0)
    for (int64_t i1 = 0; i1 < d[1]; ++i1)
      for (int64_t i2 = 0; i2 < d[2]; ++i2) {
        const int64_t ba = i0 * sa[0] + i1 * sa[1] + i2 * sa[2];
        const int64_t bb = i0 * sb[0] + i1 * sb[1] + i2 * sb[2];
        for (int64_t i3 = 0; i3 < d[3]; ++i3, ++o) f(o, ba + i3 * sa[3], bb + i3 * sb[3]);
      }
}

// f(x, y) -> value; check(x, y, index) throws on domain violations;
// da/db(x, y, out) -> partial derivatives.
template <class T, class F, class C, class DA, class DB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, C check, DA da, DB db) {
  Broadcast bc = broadcast(a.shape(), b.shape(), op);
  const int64_t n = shape_numel(bc.out);
  const auto& xa = a.node().data;
  const auto& xb = b.node().data;
  std::vector<T> out(static_cast<size_t>(n));
  for_each_broadcast(bc, n, [&](int64_t o, int64_t ia, int64_t ib) {
    check(xa[ia], xb[ib], o);
    out[o] = f(xa[ia], xb[ib]);
  });
  return record<T>(op, bc.out, std::move(out), {a, b}, [bc, n, da, db](NodeT<T>& self) {
    const auto& xa = input_data(self, 0);
    const auto& xb = input_data(self, 1);
    auto* ga = input_grad(self, 0);
    auto* gb = input_grad(self, 1);
    const auto& g = self.grad;
    const auto& y = self.data;
    for_each_broadcast(bc, n, [&](int64_t o, int64_t ia, int64_t ib) {
      if (ga) (*ga)[ia] += g[o] * da(xa[ia], xb[ib], y[o]);
      if (gb) (*gb)[ib] += g[o] * db(xa[ia], xb[ib], y[o]);
    });
  });
}

template <class T, class F, class C, class D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, C check, D dfdx) {
  const auto& xs = x.node().data;
  std::vector<T> out(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    check(xs[i], static_cast<int64_t>(i));
    out[i] = f(xs[i]);
  }
  return record<T>(op, x.shape(), std::move(out), {x}, [dfdx](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& xs = input_data(self, 0);
    for (size_t i = 0; i < xs.size(); ++i) (*gx)[i] += self.grad[i] * dfdx(xs[i], self.data[i]);
  });
}

constexpr auto kNoCheck2 = [](auto, auto, int64_t) {};
constexpr auto kNoCheck1 = [](auto, int64_t) {};

void require_rank(const Shape& s, size_t rank, const char* op) {
  if (s.size() != rank) raise(ErrorCode::ShapeMismatch, op, ": expected rank ", rank, ", got ", shape_str(s));
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, kNoCheck2, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, kNoCheck2, [](T, T, T) { return T(1); },
      [](T, T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, kNoCheck2, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; },
      [](T, T y, int64_t i) {
        if (y == T(0)) raise(ErrorCode::Domain, "div: zero denominator at index ", i);
      },
      [](T, T y, T) { return T(1) / y; }, [](T, T y, T out) { return -out / y; });
}

template <class T>
Tensor<T> pow(const Tensor<T>& base, const Tensor<T>& exponent) {
  return binary<T>(
      "pow", base, exponent, [](T x, T e) { return std::pow(x, e); },
      [](T x, T, int64_t i) {
        if (x < T(0)) raise(ErrorCode::Domain, "pow: negative base ", x, " at index ", i);
      },
      [](T x, T e, T) { return e == T(0) ? T(0) : e * std::pow(x, e - T(1)); },
      [](T x, T, T out) { return x > T(0) ? out * std::log(x) : T(0); });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary<T>("add_scalar", x, [c](T v) { return v + c; }, kNoCheck1, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return unary<T>("mul_scalar", x, [c](T v) { return v * c; }, kNoCheck1, [c](T, T) { return c; });
}

template <class T>
Tensor<T> pow_scalar(const Tensor<T>& x, T e) {
  return unary<T>(
      "pow_scalar", x, [e](T v) { return std::pow(v, e); },
      [e](T v, int64_t i) {
        if (v < T(0) && std::floor(e) != e)
          raise(ErrorCode::Domain, "pow_scalar: negative base ", v, " with fractional exponent at index ", i);
      },
      [e](T v, T) { return e == T(0) ? T(0) : e * std::pow(v, e - T(1)); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary<T>("neg", x, [](T v) { return -v; }, kNoCheck1, [](T, T) { return T(-1); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary<T>("exp", x, [](T v) { return std::exp(v); }, kNoCheck1, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
  return unary<T>(
      "log", x, [](T v) { return std::log(v); },
      [](T v, int64_t i) {
        if (!(v > T(0))) raise(ErrorCode::Domain, "log: non-positive operand ", v, " at index ", i);
      },
      [](T v, T) { return T(1) / v; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      "abs", x, [](T v) { return std::abs(v); }, kNoCheck1,
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, kNoCheck1, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; }, kNoCheck1,
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      "sigmoid", x, [](T v) { return stable_sigmoid(v); }, kNoCheck1, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary<T>(
      "softplus", x,
      [](T v) { return v > T(20) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }, kNoCheck1,
      [](T v, T) { return stable_sigmoid(v); });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); },
      [](T v, int64_t i) {
        if (!(v > T(0))) raise(ErrorCode::Domain, "sqrt: non-positive operand ", v, " at index ", i);
      },
      [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary<T>("sin", x, [](T v) { return std::sin(v); }, kNoCheck1, [](T v, T) { return std::cos(v); });
}

template <class T>
Tensor<T> cos(const Tensor<T>& x) {
  return unary<T>("cos", x, [](T v) { return std::cos(v); }, kNoCheck1, [](T v, T) { return -std::sin(v); });
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  if (lo > hi) raise(ErrorCode::InvalidArgument, "clamp: lo > hi");
  return unary<T>(
      "clamp", x, [lo, hi](T v) { return std::clamp(v, lo, hi); }, kNoCheck1,
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return record<T>("sum", {1}, {s}, {x}, [](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    const T g = self.grad[0];
    for (auto& v : *gx) v += g;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto n = static_cast<T>(x.numel());
  T s = 0;
  for (T v : x.data()) s += v;
  return record<T>("mean", {1}, {s / n}, {x}, [n](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    const T g = self.grad[0] / n;
    for (auto& v : *gx) v += g;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const int m = static_cast<int>(a.dim(0));
  const int k = static_cast<int>(a.dim(1));
  const int n = static_cast<int>(b.dim(1));
  if (b.dim(0) != k)
    raise(ErrorCode::ShapeMismatch, "matmul: inner dimensions differ, ", shape_str(a.shape()), " x ",
          shape_str(b.shape()));
  std::vector<T> out(static_cast<size_t>(m) * n);
  blas::gemm(false, false, m, n, k, T(1), a.data().data(), k, b.data().data(), n, T(0), out.data(), n);
  return record<T>("matmul", {m, n}, std::move(out), {a, b}, [m, n, k](NodeT<T>& self) {
    const T* g = self.grad.data();
    if (auto* ga = input_grad(self, 0))
      blas::gemm(false, true, m, k, n, T(1), g, n, input_data(self, 1).data(), n, T(1), ga->data(), k);
    if (auto* gb = input_grad(self, 1))
      blas::gemm(true, false, k, n, m, T(1), input_data(self, 0).data(), k, g, n, T(1), gb->data(), n);
  });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

// Maps a padded coordinate into [0, n), or -1 for a zero-padded tap.
inline int64_t map_coord(int64_t i, int64_t n, PadMode mode) {
  if (i >= 0 && i < n) return i;
  switch (mode) {
    case PadMode::Zero: return -1;
    case PadMode::Replicate: return i < 0 ? 0 : n - 1;
    case PadMode::Reflect: {
      if (n == 1) return 0;
      const int64_t period = 2 * (n - 1);
      int64_t r = i % period;
      if (r < 0) r += period;
      return r < n ? r : period - r;
    }
  }
  return -1;
}

struct ConvGeom {
  int64_t c, h, w, o, k, stride, pad, ho, wo;
  PadMode mode;
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

template <class T>
void im2col(const T* in, const ConvGeom& g, T* col) {
  const int64_t plane = g.ho * g.wo;
  for (int64_t c = 0; c < g.c; ++c)
    for (int64_t ky = 0; ky < g.k; ++ky)
      for (int64_t kx = 0; kx < g.k; ++kx) {
        T* dst = col + ((c * g.k + ky) * g.k + kx) * plane;
        const T* src_plane = in + c * g.h * g.w;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = map_coord(oy * g.stride - g.pad + ky, g.h, g.mode);
          T* row = dst + oy * g.wo;
          if (iy < 0) {
            std::fill(row, row + g.wo, T(0));
            continue;
          }
          const T* src = src_plane + iy * g.w;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) {
              row[ox] = src[ix];
            } else {
              const int64_t m = map_coord(ix, g.w, g.mode);
              row[ox] = m < 0 ? T(0) : src[m];
            }
          }
        }
      }
}

template <class T>
void col2im(const T* col, const ConvGeom& g, T* in_grad) {
  const int64_t plane = g.ho * g.wo;
  for (int64_t c = 0; c < g.c; ++c)
    for (int64_t ky = 0; ky < g.k; ++ky)
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const T* src = col + ((c * g.k + ky) * g.k + kx) * plane;
        T* dst_plane = in_grad + c * g.h * g.w;
        for (int64_t oy = 0; oy < g.ho; ++oy) {
          const int64_t iy = map_coord(oy * g.stride - g.pad + ky, g.h, g.mode);
          if (iy < 0) continue;
          T* dst = dst_plane + iy * g.w;
          const T* row = src + oy * g.wo;
          for (int64_t ox = 0; ox < g.wo; ++ox) {
            const int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) {
              dst[ix] += row[ox];
            } else {
              const int64_t m = map_coord(ix, g.w, g.mode);
              if (m >= 0) dst[m] += row[ox];
            }
          }
        }
      }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int padding,
                 PadMode mode) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(kernel.shape(), 4, "conv2d kernel");
  ConvGeom g{};
  g.c = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.o = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.mode = mode;
  if (kernel.dim(1) != g.c)
    raise(ErrorCode::ShapeMismatch, "conv2d: input has ", g.c, " channels but kernel expects ", kernel.dim(1));
  if (kernel.dim(3) != g.k || g.k % 2 == 0)
    raise(ErrorCode::InvalidArgument, "conv2d: kernel must be square with odd size, got ", shape_str(kernel.shape()));
  if (stride < 1 || padding < 0) raise(ErrorCode::InvalidArgument, "conv2d: stride must be >= 1 and padding >= 0");
  if (mode == PadMode::Reflect && (padding >= g.h || padding >= g.w))
    raise(ErrorCode::InvalidArgument, "conv2d: reflect padding ", padding, " too large for ", shape_str(input.shape()));
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k)
    raise(ErrorCode::ShapeMismatch, "conv2d: input ", shape_str(input.shape()), " smaller than kernel");
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != g.o)
    raise(ErrorCode::ShapeMismatch, "conv2d: bias has ", bias.numel(), " entries for ", g.o, " output channels");

  const int64_t plane = g.ho * g.wo;
  const int64_t ckk = g.c * g.k * g.k;
  std::vector<T> out(static_cast<size_t>(g.o * plane));
  {
    std::vector<T> col;
    const T* cols = input.data().data();
    if (!g.pointwise()) {
      col.resize(static_cast<size_t>(ckk * plane));
      im2col(input.data().data(), g, col.data());
      cols = col.data();
    }
    if (has_bias) {
      const auto b = bias.data();
      for (int64_t o = 0; o < g.o; ++o) std::fill_n(out.begin() + o * plane, plane, b[o]);
    }
    blas::gemm(false, false, static_cast<int>(g.o), static_cast<int>(plane), static_cast<int>(ckk), T(1),
               kernel.data().data(), static_cast<int>(ckk), cols, static_cast<int>(plane), has_bias ? T(1) : T(0),
               out.data(), static_cast<int>(plane));
  }
  std::vector<Tensor<T>> inputs{input, kernel};
  if (has_bias) inputs.push_back(bias);
  return record<T>("conv2d", {g.o, g.ho, g.wo}, std::move(out), inputs, [g, plane, ckk, has_bias](NodeT<T>& self) {
    const T* grad = self.grad.data();
    const auto& x = input_data(self, 0);
    const auto& w = input_data(self, 1);
    auto* gx = input_grad(self, 0);
    auto* gw = input_grad(self, 1);
    const int io = static_cast<int>(g.o), ip = static_cast<int>(plane), ic = static_cast<int>(ckk);
    if (gw) {
      std::vector<T> col;
      const T* cols = x.data();
      if (!g.pointwise()) {
        col.resize(static_cast<size_t>(ckk * plane));
        im2col(x.data(), g, col.data());
        cols = col.data();
      }
      blas::gemm(false, true, io, ic, ip, T(1), grad, ip, cols, ip, T(1), gw->data(), ic);
    }
    if (has_bias) {
      if (auto* gb = input_grad(self, 2))
        for (int64_t o = 0; o < g.o; ++o) {
          T s = 0;
          for (int64_t i = 0; i < plane; ++i) s += grad[o * plane + i];
          (*gb)[o] += s;
        }
    }
    if (gx) {
      if (g.pointwise()) {
        blas::gemm(true, false, ic, ip, io, T(1), w.data(), ic, grad, ip, T(1), gx->data(), ip);
      } else {
        std::vector<T> dcol(static_cast<size_t>(ckk * plane));
        blas::gemm(true, false, ic, ip, io, T(1), w.data(), ic, grad, ip, T(0), dcol.data(), ip);
        col2im(dcol.data(), g, gx->data());
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Pooling and resampling

template <class T>
Tensor<T> max_pool2x2(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "max_pool2x2");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) raise(ErrorCode::ShapeMismatch, "max_pool2x2: odd spatial size ", shape_str(x.shape()));
  const int64_t ho = h / 2, wo = w / 2;
  std::vector<T> out(static_cast<size_t>(c * ho * wo));
  std::vector<int64_t> arg(out.size());
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        const int64_t base = (ch * h + 2 * oy) * w + 2 * ox;
        int64_t best = base;
        for (int64_t idx : {base + 1, base + w, base + w + 1})
          if (xs[idx] > xs[best]) best = idx;
        const int64_t o = (ch * ho + oy) * wo + ox;
        out[o] = xs[best];
        arg[o] = best;
      }
  return record<T>("max_pool2x2", {c, ho, wo}, std::move(out), {x}, [arg = std::move(arg)](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t o = 0; o < arg.size(); ++o) (*gx)[arg[o]] += self.grad[o];
  });
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "global_avg_pool");
  const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  std::vector<T> out(static_cast<size_t>(c));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    T s = 0;
    for (int64_t i = 0; i < plane; ++i) s += xs[ch * plane + i];
    out[ch] = s / static_cast<T>(plane);
  }
  return record<T>("global_avg_pool", {c, 1, 1}, std::move(out), {x}, [c, plane](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (int64_t ch = 0; ch < c; ++ch) {
      const T g = self.grad[ch] / static_cast<T>(plane);
      for (int64_t i = 0; i < plane; ++i) (*gx)[ch * plane + i] += g;
    }
  });
}

template <class T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "global_max_pool");
  const int64_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  std::vector<T> out(static_cast<size_t>(c));
  std::vector<int64_t> arg(static_cast<size_t>(c));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch) {
    int64_t best = ch * plane;
    for (int64_t i = 1; i < plane; ++i)
      if (xs[ch * plane + i] > xs[best]) best = ch * plane + i;
    out[ch] = xs[best];
    arg[ch] = best;
  }
  return record<T>("global_max_pool", {c, 1, 1}, std::move(out), {x}, [arg = std::move(arg)](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t ch = 0; ch < arg.size(); ++ch) (*gx)[arg[ch]] += self.grad[ch];
  });
}

template <class T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "channel_mean");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
  std::vector<T> out(static_cast<size_t>(plane), T(0));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < plane; ++i) out[i] += xs[ch * plane + i];
  for (auto& v : out) v /= static_cast<T>(c);
  return record<T>("channel_mean", {1, h, w}, std::move(out), {x}, [c, plane](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < plane; ++i) (*gx)[ch * plane + i] += self.grad[i] / static_cast<T>(c);
  });
}

template <class T>
Tensor<T> channel_max(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "channel_max");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
  std::vector<T> out(static_cast<size_t>(plane));
  std::vector<int64_t> arg(static_cast<size_t>(plane));
  const auto xs = x.data();
  for (int64_t i = 0; i < plane; ++i) {
    int64_t best = i;
    for (int64_t ch = 1; ch < c; ++ch)
      if (xs[ch * plane + i] > xs[best]) best = ch * plane + i;
    out[i] = xs[best];
    arg[i] = best;
  }
  return record<T>("channel_max", {1, h, w}, std::move(out), {x}, [arg = std::move(arg)](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t i = 0; i < arg.size(); ++i) (*gx)[arg[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank(x.shape(), 3, "upsample_nearest2x");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int64_t ho = 2 * h, wo = 2 * w;
  std::vector<T> out(static_cast<size_t>(c * ho * wo));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t xx = 0; xx < wo; ++xx) out[(ch * ho + y) * wo + xx] = xs[(ch * h + y / 2) * w + xx / 2];
  return record<T>("upsample_nearest2x", {c, ho, wo}, std::move(out), {x}, [c, h, w](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    const int64_t ho = 2 * h, wo = 2 * w;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < ho; ++y)
        for (int64_t xx = 0; xx < wo; ++xx) (*gx)[(ch * h + y / 2) * w + xx / 2] += self.grad[(ch * ho + y) * wo + xx];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.empty() || shape.size() > kMaxRank || shape_numel(shape) != x.numel())
    raise(ErrorCode::ShapeMismatch, "reshape: cannot view ", shape_str(x.shape()), " as ", shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return record<T>("reshape", std::move(shape), std::move(out), {x}, [](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t i = 0; i < gx->size(); ++i) (*gx)[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> concat(std::span<const Tensor<T>> parts) {
  if (parts.empty()) raise(ErrorCode::InvalidArgument, "concat: no inputs");
  Shape out_shape = parts[0].shape();
  const Shape tail(out_shape.begin() + 1, out_shape.end());
  int64_t lead = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != out_shape.size() || !std::equal(tail.begin(), tail.end(), s.begin() + 1))
      raise(ErrorCode::ShapeMismatch, "concat: ", shape_str(s), " incompatible with ", shape_str(out_shape));
    lead += s[0];
  }
  out_shape[0] = lead;
  std::vector<T> out;
  out.reserve(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(static_cast<int64_t>(out.size()));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return record<T>("concat", std::move(out_shape), std::move(out), inputs, [offsets](NodeT<T>& self) {
    for (size_t i = 0; i < self.inputs.size(); ++i) {
      auto* gi = input_grad(self, i);
      if (!gi) continue;
      for (size_t j = 0; j < gi->size(); ++j) (*gi)[j] += self.grad[offsets[i] + j];
    }
  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, int64_t begin, int64_t end) {
  const Shape& s = x.shape();
  if (begin < 0 || end > s[0] || begin >= end)
    raise(ErrorCode::InvalidArgument, "slice: range [", begin, ", ", end, ") invalid for ", shape_str(s));
  const int64_t inner = x.numel() / s[0];
  Shape out_shape = s;
  out_shape[0] = end - begin;
  std::vector<T> out(x.data().begin() + begin * inner, x.data().begin() + end * inner);
  return record<T>("slice", std::move(out_shape), std::move(out), {x}, [off = begin * inner](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t j = 0; j < self.grad.size(); ++j) (*gx)[off + j] += self.grad[j];
  });
}

template <class T>
Tensor<T> crop(const Tensor<T>& x, int64_t y0, int64_t x0, int64_t h, int64_t w) {
  require_rank(x.shape(), 3, "crop");
  const int64_t c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > H || x0 + w > W)
    raise(ErrorCode::InvalidArgument, "crop: window (", y0, ",", x0, ",", h, ",", w, ") outside ", shape_str(x.shape()));
  std::vector<T> out(static_cast<size_t>(c * h * w));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < h; ++y)
      std::copy_n(xs.begin() + (ch * H + y0 + y) * W + x0, w, out.begin() + (ch * h + y) * w);
  return record<T>("crop", {c, h, w}, std::move(out), {x}, [c, H, W, y0, x0, h, w](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) (*gx)[(ch * H + y0 + y) * W + x0 + xx] += self.grad[(ch * h + y) * w + xx];
  });
}

template <class T>
Tensor<T> pad_reflect(const Tensor<T>& x, int64_t top, int64_t bottom, int64_t left, int64_t right) {
  require_rank(x.shape(), 3, "pad_reflect");
  const int64_t c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    raise(ErrorCode::InvalidArgument, "pad_reflect: negative padding");
  const int64_t ho = H + top + bottom, wo = W + left + right;
  std::vector<int64_t> src(static_cast<size_t>(ho * wo));
  for (int64_t y = 0; y < ho; ++y)
    for (int64_t xx = 0; xx < wo; ++xx)
      src[y * wo + xx] = map_coord(y - top, H, PadMode::Reflect) * W + map_coord(xx - left, W, PadMode::Reflect);
  std::vector<T> out(static_cast<size_t>(c * ho * wo));
  const auto xs = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < ho * wo; ++i) out[ch * ho * wo + i] = xs[ch * H * W + src[i]];
  return record<T>("pad_reflect", {c, ho, wo}, std::move(out), {x},
                   [c, plane_in = H * W, plane_out = ho * wo, src = std::move(src)](NodeT<T>& self) {
                     auto* gx = input_grad(self, 0);
                     for (int64_t ch = 0; ch < c; ++ch)
                       for (int64_t i = 0; i < plane_out; ++i)
                         (*gx)[ch * plane_in + src[i]] += self.grad[ch * plane_out + i];
                   });
}

template <class T>
Tensor<T> sparse_apply(std::shared_ptr<const SparseMatrix> op, const Tensor<T>& x, Shape out_shape) {
  if (!op) raise(ErrorCode::InvalidArgument, "sparse_apply: null operator");
  const SparseMatrix& a = *op;
  if (a.cols != x.numel() || a.rows != shape_numel(out_shape) ||
      static_cast<int64_t>(a.row_ptr.size()) != a.rows + 1)
    raise(ErrorCode::ShapeMismatch, "sparse_apply: operator ", a.rows, "x", a.cols, " cannot map ",
          shape_str(x.shape()), " to ", shape_str(out_shape));
  std::vector<T> out(static_cast<size_t>(a.rows));
  const auto xs = x.data();
  for (int64_t r = 0; r < a.rows; ++r) {
    T s = 0;
    for (int64_t j = a.row_ptr[r]; j < a.row_ptr[r + 1]; ++j) s += static_cast<T>(a.values[j]) * xs[a.col_idx[j]];
    out[r] = s;
  }
  return record<T>("sparse_apply", std::move(out_shape), std::move(out), {x}, [op](NodeT<T>& self) {
    const SparseMatrix& a = *op;
    auto* gx = input_grad(self, 0);
    for (int64_t r = 0; r < a.rows; ++r) {
      const T g = self.grad[r];
      for (int64_t j = a.row_ptr[r]; j < a.row_ptr[r + 1]; ++j) (*gx)[a.col_idx[j]] += static_cast<T>(a.values[j]) * g;
    }
  });
}

template <class T>
Tensor<T> gather(const Tensor<T>& x, std::span<const int64_t> indices, Shape out_shape) {
  if (static_cast<int64_t>(indices.size()) != shape_numel(out_shape))
    raise(ErrorCode::ShapeMismatch, "gather: ", indices.size(), " indices for output ", shape_str(out_shape));
  const auto xs = x.data();
  std::vector<T> out(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= x.numel())
      raise(ErrorCode::InvalidArgument, "gather: index ", indices[i], " out of range");
    out[i] = xs[indices[i]];
  }
  std::vector<int64_t> idx(indices.begin(), indices.end());
  return record<T>("gather", std::move(out_shape), std::move(out), {x}, [idx = std::move(idx)](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    for (size_t i = 0; i < idx.size(); ++i) (*gx)[idx[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> soft_histogram(const Tensor<T>& x, int bins) {
  require_rank(x.shape(), 3, "soft_histogram");
  if (bins < 2) raise(ErrorCode::InvalidArgument, "soft_histogram: bins must be >= 2, got ", bins);
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
  const auto xs = x.data();
  for (int64_t i = 0; i < x.numel(); ++i)
    if (!(xs[i] >= T(0) && xs[i] <= T(1)))
      raise(ErrorCode::Domain, "soft_histogram: value ", xs[i], " at index ", i, " outside [0,1]");
  const T nb = static_cast<T>(bins);
  std::vector<T> out(static_cast<size_t>(c * bins * plane), T(0));
  for (int64_t ch = 0; ch < c; ++ch)
    for (int b = 0; b < bins; ++b) {
      const T center = (static_cast<T>(b) + T(0.5)) / nb;
      T* dst = out.data() + (ch * bins + b) * plane;
      const T* src = xs.data() + ch * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = std::max(T(0), T(1) - std::abs(src[i] - center) * nb);
    }
  return record<T>("soft_histogram", {c * bins, h, w}, std::move(out), {x}, [c, bins, plane](NodeT<T>& self) {
    auto* gx = input_grad(self, 0);
    const auto& xs = input_data(self, 0);
    const T nb = static_cast<T>(bins);
    for (int64_t ch = 0; ch < c; ++ch)
      for (int b = 0; b < bins; ++b) {
        const T center = (static_cast<T>(b) + T(0.5)) / nb;
        const T* g = self.grad.data() + (ch * bins + b) * plane;
        const T* y = self.data.data() + (ch * bins + b) * plane;
        for (int64_t i = 0; i < plane; ++i) {
          if (y[i] <= T(0)) continue;
          const T d = xs[ch * plane + i] - center;
          if (d > T(0)) (*gx)[ch * plane + i] -= g[i] * nb;
          else if (d < T(0)) (*gx)[ch * plane + i] += g[i] * nb;
        }
      }
  });
}

#define PARAMISP_INSTANTIATE(T)                                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> pow(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> pow_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> neg(const Tensor<T>&);                                                        \
  template Tensor<T> exp(const Tensor<T>&);                                                        \
  template Tensor<T> log(const Tensor<T>&);                                                        \
  template Tensor<T> abs(const Tensor<T>&);                                                        \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
  template Tensor<T> softplus(const Tensor<T>&);                                                   \
  template Tensor<T> sqrt(const Tensor<T>&);                                                       \
  template Tensor<T> sin(const Tensor<T>&);                                                        \
  template Tensor<T> cos(const Tensor<T>&);                                                        \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int, PadMode); \
  template Tensor<T> max_pool2x2(const Tensor<T>&);                                                \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                            \
  template Tensor<T> global_max_pool(const Tensor<T>&);                                            \
  template Tensor<T> channel_mean(const Tensor<T>&);                                               \
  template Tensor<T> channel_max(const Tensor<T>&);                                                \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> concat(std::span<const Tensor<T>>);                                           \
  template Tensor<T> slice(const Tensor<T>&, int64_t, int64_t);                                    \
  template Tensor<T> crop(const Tensor<T>&, int64_t, int64_t, int64_t, int64_t);                   \
  template Tensor<T> pad_reflect(const Tensor<T>&, int64_t, int64_t, int64_t, int64_t);            \
  template Tensor<T> sparse_apply(std::shared_ptr<const SparseMatrix>, const Tensor<T>&, Shape);                   \
  template Tensor<T> gather(const Tensor<T>&, std::span<const int64_t>, Shape);                    \
  template Tensor<T> soft_histogram(const Tensor<T>&, int);

PARAMISP_INSTANTIATE(float)
PARAMISP_INSTANTIATE(double)

#undef PARAMISP_INSTANTIATE

}  // namespace paramisp

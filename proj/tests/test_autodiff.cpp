#include <gtest/gtest.h>

#include "paramisp/grad_check.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/optim.hpp"
#include "test_util.hpp"

using namespace paramisp;
using testutil::error_of;
using testutil::random_tensor;

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_EQ(error_of([] { Tensor<float>({2, 3}, std::vector<float>(5)); }), ErrorCode::ShapeMismatch);
  const auto t = Tensor<float>::full({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(1), 3);
  EXPECT_FLOAT_EQ(t.data()[4], 1.5f);
}

TEST(Ops, BroadcastAddReducesGradient) {
  auto a = Tensor<double>::full({2, 3}, 1.0, true);
  auto b = Tensor<double>({1, 3}, {1, 2, 3}, true);
  auto y = add(a, b);
  EXPECT_DOUBLE_EQ(y.data()[5], 4.0);
  backward(sum(y));
  for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
  for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Ops, IncompatibleBroadcastFails) {
  auto a = Tensor<float>::zeros({2, 3}), b = Tensor<float>::zeros({3, 2});
  EXPECT_EQ(error_of([&] { add(a, b); }), ErrorCode::ShapeMismatch);
}

TEST(Ops, DomainErrors) {
  auto z = Tensor<double>::zeros({3});
  auto one = Tensor<double>::full({3}, 1.0);
  EXPECT_EQ(error_of([&] { div(one, z); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { paramisp::log(z); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { paramisp::sqrt(neg(one)); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { paramisp::pow(neg(one), one); }), ErrorCode::Domain);
}

TEST(Ops, OverflowRaisesNonFinite) {
  auto x = Tensor<float>::full({2}, 200.0f);
  EXPECT_EQ(error_of([&] { paramisp::exp(x); }), ErrorCode::NonFinite);
}

TEST(Autodiff, LeafGradientsAccumulate) {
  auto x = Tensor<double>({2}, {1.0, 2.0}, true);
  backward(sum(mul(x, x)));
  backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 8.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Autodiff, SharedSubexpression) {
  auto x = Tensor<double>::scalar(3.0, true);
  auto y = mul(x, x);
  backward(add(y, mul(y, x)));  // x^2 + x^3
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 3.0 + 3 * 9.0);
}

TEST(Autodiff, BackwardNeedsScalar) {
  auto x = Tensor<double>::full({3}, 1.0, true);
  EXPECT_EQ(error_of([&] { backward(mul_scalar(x, 2.0)); }), ErrorCode::ShapeMismatch);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  auto x = Tensor<float>::full({4}, 1.0f, true);
  {
    NoGradGuard g;
    EXPECT_FALSE(grad_enabled());
    auto y = sum(mul(x, x));
    EXPECT_FALSE(y.requires_grad());
    EXPECT_EQ(graph_size(y), 0u);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_GT(graph_size(sum(mul(x, x))), 0u);
}

TEST(Ops, MatmulValues) {
  auto a = Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_DOUBLE_EQ(c.data()[0], 58);
  EXPECT_DOUBLE_EQ(c.data()[3], 154);
}

namespace {

int64_t mirror(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t p = 2 * (n - 1);
  i %= p;
  if (i < 0) i += p;
  return i < n ? i : p - i;
}

// Direct convolution used as a reference.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, int stride,
                              int pad, PadMode mode) {
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2), o = k.dim(0), ks = k.dim(2);
  const int64_t ho = (h + 2 * pad - ks) / stride + 1, wo = (w + 2 * pad - ks) / stride + 1;
  std::vector<double> out(static_cast<size_t>(o * ho * wo));
  for (int64_t oc = 0; oc < o; ++oc)
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t xx = 0; xx < wo; ++xx) {
        double s = b.defined() ? b.data()[oc] : 0.0;
        for (int64_t ic = 0; ic < c; ++ic)
          for (int64_t ky = 0; ky < ks; ++ky)
            for (int64_t kx = 0; kx < ks; ++kx) {
              int64_t iy = y * stride + ky - pad, ix = xx * stride + kx - pad;
              if (mode == PadMode::Zero) {
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              } else if (mode == PadMode::Reflect) {
                iy = mirror(iy, h);
                ix = mirror(ix, w);
              } else {
                iy = std::clamp<int64_t>(iy, 0, h - 1);
                ix = std::clamp<int64_t>(ix, 0, w - 1);
              }
              s += x.data()[(ic * h + iy) * w + ix] * k.data()[((oc * c + ic) * ks + ky) * ks + kx];
            }
        out[static_cast<size_t>((oc * ho + y) * wo + xx)] = s;
      }
  return Tensor<double>({o, ho, wo}, std::move(out));
}

}  // namespace

class ConvModes : public ::testing::TestWithParam<std::tuple<PadMode, int, int>> {};

TEST_P(ConvModes, MatchesDirectConvolution) {
  const auto [mode, stride, ks] = GetParam();
  std::mt19937_64 rng(3);
  auto x = random_tensor<double>({5, 9, 7}, rng, -1, 1);
  auto k = random_tensor<double>({4, 5, ks, ks}, rng, -1, 1);
  auto b = random_tensor<double>({4}, rng, -1, 1);
  const int pad = ks / 2;
  EXPECT_LT(testutil::max_abs_diff(conv2d(x, k, b, stride, pad, mode), conv_reference(x, k, b, stride, pad, mode)),
            1e-12);
}

INSTANTIATE_TEST_SUITE_P(All, ConvModes,
                         ::testing::Combine(::testing::Values(PadMode::Zero, PadMode::Reflect, PadMode::Replicate),
                                            ::testing::Values(1, 2), ::testing::Values(1, 3, 5)));

TEST(Ops, LargeChannelConvGradient) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<double>({96, 6, 6}, rng, -1, 1, true);
  auto k = random_tensor<double>({4, 96, 3, 3}, rng, -1, 1, true);
  auto w = random_tensor<double>({4, 6, 6}, rng, -1, 1);
  const auto r = grad_check([&] { return sum(mul(conv2d(x, k, Tensor<double>(), 1, 1), w)); }, {x, k});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Ops, PadReflectIsPeriodicMirror) {
  auto x = Tensor<double>({1, 1, 3}, {1, 2, 3});
  auto y = pad_reflect(x, 0, 0, 2, 5);
  const std::vector<double> expect{3, 2, 1, 2, 3, 2, 1, 2, 3, 2};
  ASSERT_EQ(y.numel(), 10);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(y.data()[i], expect[i]);
}

TEST(Ops, MaxPoolAndUpsample) {
  auto x = Tensor<float>({1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7});
  auto p = max_pool2x2(x);
  EXPECT_EQ(p.shape(), (Shape{1, 1, 2}));
  EXPECT_FLOAT_EQ(p.data()[0], 5);
  EXPECT_FLOAT_EQ(p.data()[1], 8);
  auto u = upsample_nearest2x(p);
  EXPECT_EQ(u.shape(), (Shape{1, 2, 4}));
  EXPECT_FLOAT_EQ(u.data()[6], 8);
}

TEST(Ops, SoftHistogramRejectsOutOfRange) {
  auto x = Tensor<float>::full({1, 2, 2}, 1.5f);
  EXPECT_EQ(error_of([&] { soft_histogram(x, 8); }), ErrorCode::Domain);
  auto y = Tensor<float>::full({1, 1, 1}, 0.3f);
  auto h = soft_histogram(y, 10);
  double s = 0;
  for (float v : h.data()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-6);  // triangular bins partition unity inside the range
}

TEST(Optim, AdamWFirstStepMatchesClosedForm) {
  auto p = Tensor<float>({2}, {1.0f, -2.0f}, true);
  AdamWOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  AdamW<float> opt({p}, o);
  backward(sum(mul(p, Tensor<float>({2}, {3.0f, -0.5f}))));
  opt.step();
  // m_hat = g, v_hat = g^2 after one step
  EXPECT_NEAR(p.data()[0], 1.0 * (1 - 0.05) - 0.1 * 3.0 / (3.0 + 1e-8), 1e-6);
  EXPECT_NEAR(p.data()[1], -2.0 * (1 - 0.05) - 0.1 * -0.5 / (0.5 + 1e-8), 1e-6);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Optim, StepWithoutGradientFails) {
  auto p = Tensor<float>::full({2}, 1.0f, true);
  AdamW<float> opt({p});
  EXPECT_EQ(error_of([&] { opt.step(); }), ErrorCode::InvalidArgument);
}

TEST(GradCheck, RejectsBadEpsilon) {
  auto x = Tensor<double>::full({2}, 1.0, true);
  GradCheckOptions o;
  o.eps = 0.1;
  EXPECT_EQ(error_of([&] { grad_check([&] { return sum(x); }, {x}, o); }), ErrorCode::InvalidArgument);
}

TEST(GradCheck, ComputesSmallErrorForSmoothFunction) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<double>({3, 4}, rng, 0.5, 2.0, true);
  const auto r = grad_check([&] { return sum(mul(paramisp::log(x), paramisp::sin(x))); }, {x});
  EXPECT_LT(r.max_rel_error, 1e-7);
  EXPECT_EQ(r.coords_checked, 12);
}

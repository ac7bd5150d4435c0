#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "paramisp/grad_check.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/paramnet.hpp"
#include "test_util.hpp"

using namespace paramisp;
using testutil::error_of;

namespace {

std::array<Tensor<double>, kOpticalCount> branches_of(const OpticalParams& p, const EqualizationConfig& cfg,
                                                       std::array<bool, kOpticalCount> keep = {true, true, true,
                                                                                                true}) {
  std::array<Tensor<double>, kOpticalCount> b;
  const auto v = p.values();
  for (int i = 0; i < kOpticalCount; ++i) {
    std::vector<double> e(kEqualizedDim, 0.0);
    if (keep[i]) {
      const auto f = equalize_parameter(v[i], cfg, i);
      e.assign(f.begin(), f.end());
    }
    b[i] = Tensor<double>({kEqualizedDim, 1}, e);
  }
  return b;
}

OpticalParams some_params() { return {1.0 / 60.0, 800.0, 2.8, 35.0}; }

}  // namespace

TEST(Equalization, RawValuesAtOne) {
  const auto cfg = EqualizationConfig::defaults();
  const auto f = equalize_raw(1.0, cfg, 0);
  EXPECT_DOUBLE_EQ(f[0], 1.0);  // x
  EXPECT_DOUBLE_EQ(f[1], 1.0);  // 1/x
  EXPECT_DOUBLE_EQ(f[2], 1.0);  // sqrt
  EXPECT_DOUBLE_EQ(f[3], 1.0);
  EXPECT_DOUBLE_EQ(f[4], 1.0);
  EXPECT_DOUBLE_EQ(f[5], 1.0);
  EXPECT_DOUBLE_EQ(f[6], 0.0);  // log
  EXPECT_DOUBLE_EQ(f[7], 0.0);  // sin(log)
  EXPECT_DOUBLE_EQ(f[8], 1.0);  // cos(log)
}

TEST(Equalization, OrderOfFunctions) {
  EqualizationConfig cfg = EqualizationConfig::defaults();
  cfg.normalize = false;
  const double x = 2.5;
  const auto f = equalize_raw(x, cfg, 1);
  EXPECT_DOUBLE_EQ(f[0], x);
  EXPECT_DOUBLE_EQ(f[1], 1 / x);
  EXPECT_DOUBLE_EQ(f[2], std::sqrt(x));
  EXPECT_DOUBLE_EQ(f[3], 1 / std::sqrt(x));
  EXPECT_DOUBLE_EQ(f[4], std::pow(x, 0.25));
  EXPECT_DOUBLE_EQ(f[5], std::pow(x, -0.25));
  EXPECT_DOUBLE_EQ(f[6], std::log(x));
  EXPECT_DOUBLE_EQ(f[7], std::sin(std::log(x)));
  EXPECT_DOUBLE_EQ(f[8], std::cos(std::log(x)));
  for (int k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(f[9 + 2 * k], std::sin(cfg.c_values[k] * x));
    EXPECT_DOUBLE_EQ(f[10 + 2 * k], std::cos(cfg.c_values[k] * x));
  }
}

TEST(Equalization, NormalizedOutputsInUnitRange) {
  const auto cfg = EqualizationConfig::defaults();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lx(std::log(1e-6), std::log(1e6));
  for (int i = 0; i < 10000; ++i) {
    const int p = i % kOpticalCount;
    for (double v : equalize_parameter(std::exp(lx(rng)), cfg, p)) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Equalization, RangeEndpointsMapToZeroAndOne) {
  std::vector<OpticalParams> s = {{0.001, 100, 2, 20}, {0.1, 3200, 8, 200}};
  const auto cfg = EqualizationConfig::fit(s);
  // x is increasing, so the smallest sample sits at the low end of slot 0.
  EXPECT_DOUBLE_EQ(equalize_parameter(100, cfg, 1)[0], 0.0);
  EXPECT_DOUBLE_EQ(equalize_parameter(3200, cfg, 1)[0], 1.0);
  // 1/x is decreasing.
  EXPECT_DOUBLE_EQ(equalize_parameter(100, cfg, 1)[1], 1.0);
  EXPECT_DOUBLE_EQ(equalize_parameter(3200, cfg, 1)[1], 0.0);
  const auto& r = cfg.ranges[0][6];
  EXPECT_NEAR(r[0], std::log(0.001), 1e-12);
  EXPECT_NEAR(r[1], std::log(0.1), 1e-12);
}

TEST(Equalization, RejectsNonPositive) {
  const auto cfg = EqualizationConfig::defaults();
  EXPECT_EQ(error_of([&] { equalize_parameter(0.0, cfg, 0); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { equalize_parameter(-2.0, cfg, 2); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { equalize_parameter(NAN, cfg, 3); }), ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { equalize_parameter(1.0, cfg, 4); }), ErrorCode::InvalidArgument);
}

TEST(Equalization, ValidateCatchesBadConfig) {
  auto cfg = EqualizationConfig::defaults();
  EXPECT_NO_THROW(cfg.validate());
  cfg.c_values = {1, 1, 16};
  EXPECT_EQ(error_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg = EqualizationConfig::defaults();
  cfg.ranges[2][5] = {1.0, 1.0};
  EXPECT_EQ(error_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_of([] { EqualizationConfig::fit({}); }), ErrorCode::InvalidArgument);
}

TEST(Equalization, OpticalParamsValidate) {
  OpticalParams p = some_params();
  EXPECT_NO_THROW(p.validate());
  p.f_number = 0;
  EXPECT_EQ(error_of([&] { p.validate(); }), ErrorCode::Domain);
  p = some_params();
  p.iso = INFINITY;
  EXPECT_EQ(error_of([&] { p.validate(); }), ErrorCode::Domain);
}

TEST(Dropout, ExtremeProbabilities) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    for (bool k : param_dropout_mask(0.0, rng, true)) EXPECT_TRUE(k);
    for (bool k : param_dropout_mask(1.0, rng, true)) EXPECT_FALSE(k);
  }
  EXPECT_EQ(error_of([&] { param_dropout_mask(1.5, rng, true); }), ErrorCode::InvalidArgument);
}

TEST(Dropout, FrequencyWithinBinomialBound) {
  std::mt19937_64 rng(20);
  std::array<int, kOpticalCount> dropped{};
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto m = param_dropout_mask(0.2, rng, true);
    for (int i = 0; i < kOpticalCount; ++i) dropped[i] += m[i] ? 0 : 1;
  }
  for (int d : dropped) {
    EXPECT_GE(d / double(trials), 0.185);
    EXPECT_LE(d / double(trials), 0.215);
  }
}

TEST(Dropout, IdentityWhenNotTraining) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i)
    for (bool k : param_dropout_mask(1.0, rng, false)) EXPECT_TRUE(k);
}

TEST(Dropout, SameSeedSameMasks) {
  std::mt19937_64 a(77), b(77);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(param_dropout_mask(0.3, a, true), param_dropout_mask(0.3, b, true));
}

class ParamNetTest : public ::testing::Test {
 protected:
  ParamNetTest() : rng_(5), net_(store_, "pn", 64, 64, rng_), cfg_(EqualizationConfig::defaults()) {}
  std::mt19937_64 rng_;
  ParamStore<double> store_;
  ParamNet<double> net_;
  EqualizationConfig cfg_;
};

TEST_F(ParamNetTest, OutputShapeAndDeterminism) {
  const auto z1 = net_.forward(some_params(), cfg_, {});
  const auto z2 = net_.forward(some_params(), cfg_, {});
  EXPECT_EQ(z1.shape(), (Shape{64, 1}));
  EXPECT_EQ(std::memcmp(z1.data().data(), z2.data().data(), sizeof(double) * 64), 0);
}

TEST_F(ParamNetTest, ProjectionsHaveNoBias) {
  int proj = 0;
  for (const auto& n : store_.names())
    if (n.find(".proj_") != std::string::npos) {
      ++proj;
      EXPECT_EQ(n.find("bias"), std::string::npos) << n;
    }
  EXPECT_EQ(proj, kOpticalCount);
}

TEST_F(ParamNetTest, AllDroppedGivesConstant) {
  std::mt19937_64 r(9);
  RunContext ctx{true, 1.0, &r};
  const auto a = net_.forward(some_params(), cfg_, ctx);
  const auto b = net_.forward({0.5, 100, 16, 300}, cfg_, ctx);
  std::array<Tensor<double>, kOpticalCount> zeros;
  for (auto& t : zeros) t = Tensor<double>::zeros({kEqualizedDim, 1});
  const auto c = net_.forward_branches(zeros);
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), sizeof(double) * 64), 0);
  EXPECT_EQ(std::memcmp(a.data().data(), c.data().data(), sizeof(double) * 64), 0);
}

TEST_F(ParamNetTest, DroppedBranchEqualsZeroedInput) {
  // Find a seed whose mask drops exactly ISO, then compare against a zeroed ISO branch.
  for (uint64_t s = 0; s < 500; ++s) {
    std::mt19937_64 probe(s);
    const auto m = param_dropout_mask(0.5, probe, true);
    if (!(m[0] && !m[1] && m[2] && m[3])) continue;
    std::mt19937_64 r(s);
    const auto z = net_.forward(some_params(), cfg_, {true, 0.5, &r});
    const auto ref = net_.forward_branches(branches_of(some_params(), cfg_, m));
    EXPECT_EQ(std::memcmp(z.data().data(), ref.data().data(), sizeof(double) * 64), 0);
    return;
  }
  FAIL() << "no seed produced the wanted mask";
}

TEST_F(ParamNetTest, TrainingRequiresRng) {
  EXPECT_EQ(error_of([&] { net_.forward(some_params(), cfg_, {true, 0.2, nullptr}); }), ErrorCode::InvalidArgument);
}

TEST_F(ParamNetTest, ParametersChangeOutput) {
  const auto a = net_.forward(some_params(), cfg_, {});
  const auto b = net_.forward({1.0 / 4000, 6400, 16, 200}, cfg_, {});
  EXPECT_GT(testutil::max_abs_diff(a, b), 1e-6);
}

TEST_F(ParamNetTest, GradientOfSquaredNormMatchesFiniteDifferences) {
  std::vector<Tensor<double>> params(store_.tensors().begin(), store_.tensors().end());
  const auto r = grad_check(
      [&] {
        const auto z = net_.forward(some_params(), cfg_, {});
        return sum(mul(z, z));
      },
      params, {1e-6, 32, 2});
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.coords_checked, 100);
}

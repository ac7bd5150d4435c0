#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "paramisp/globalnet.hpp"
#include "paramisp/grad_check.hpp"
#include "paramisp/localnet.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/pipeline.hpp"
#include "test_util.hpp"

using namespace paramisp;
using testutil::error_of;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

Tensor<double> coeff(double a, double b, double c) { return Tensor<double>({3, 1, 1}, {a, b, c}); }

template <class T>
void perturb_all(const ParamStore<T>& store, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0, scale);
  for (const auto& t : store.tensors()) {
    Tensor<T> h = t;
    for (auto& v : h.data_mut()) v += static_cast<T>(n(rng));
  }
}

}  // namespace

TEST(Quadratic, FeatureExamples) {
  const auto zero = quad_features(0, 0, 0);
  for (int i = 0; i < 9; ++i) EXPECT_EQ(zero[i], 0.0);
  EXPECT_EQ(zero[9], 1.0);
  for (double v : quad_features(1, 1, 1)) EXPECT_EQ(v, 1.0);
  const std::array<double, 10> half{0.25, 0, 0, 0, 0, 0, 0.5, 0, 0, 1};
  EXPECT_EQ(quad_features(0.5, 0, 0), half);
}

TEST(Quadratic, IdentityMatrixIsIdentityMap) {
  std::mt19937_64 rng(1);
  const auto img = random_tensor<double>({3, 5, 7}, rng);
  EXPECT_LT(max_abs_diff(quadratic_transform(img, identity_quad_matrix<double>()), img), 1e-15);
}

TEST(Quadratic, AllOnesOnUnitPixel) {
  const auto out = quadratic_transform(Tensor<double>::full({3, 2, 2}, 1.0), Tensor<double>::full({3, 10}, 1.0));
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 10.0);
}

TEST(Quadratic, MatchesScalarForm) {
  std::mt19937_64 rng(2);
  const auto img = random_tensor<double>({3, 3, 4}, rng);
  const auto w = random_tensor<double>({3, 10}, rng, -1, 1);
  const auto out = quadratic_transform(img, w);
  for (int64_t i = 0; i < 12; ++i) {
    const auto p = quad_features(img.data()[i], img.data()[12 + i], img.data()[24 + i]);
    for (int c = 0; c < 3; ++c) {
      double ref = 0;
      for (int k = 0; k < 10; ++k) ref += w.data()[c * 10 + k] * p[k];
      EXPECT_NEAR(out.data()[c * 12 + i], ref, 1e-12);
    }
  }
}

TEST(Quadratic, ShapeErrors) {
  EXPECT_EQ(error_of([] { quadratic_transform(Tensor<double>::zeros({3, 2, 2}), Tensor<double>::zeros({3, 9})); }),
            ErrorCode::ShapeMismatch);
  EXPECT_EQ(error_of([] { quadratic_transform(Tensor<double>::zeros({1, 2, 2}), identity_quad_matrix<double>()); }),
            ErrorCode::ShapeMismatch);
}

TEST(Gamma, UnitExponentIsIdentityForAnyAlphaBeta) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  const auto img = random_tensor<double>({3, 6, 6}, rng);
  for (int t = 0; t < 50; ++t) {
    const auto out = gamma_correction(img, coeff(u(rng), u(rng), u(rng)), coeff(u(rng), u(rng), u(rng)), coeff(1, 1, 1));
    EXPECT_LT(max_abs_diff(out, img), 1e-12);
  }
}

TEST(Gamma, EndpointsFixed) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  const Tensor<double> img({3, 1, 2}, {0, 1, 0, 1, 0, 1});
  for (int t = 0; t < 50; ++t) {
    const auto out = gamma_correction(img, coeff(u(rng), u(rng), u(rng)), coeff(u(rng), u(rng), u(rng)),
                                      coeff(u(rng), u(rng), u(rng)));
    for (int c = 0; c < 3; ++c) {
      EXPECT_NEAR(out.data()[2 * c], 0.0, 1e-12);
      EXPECT_NEAR(out.data()[2 * c + 1], 1.0, 1e-12);
    }
  }
}

TEST(Gamma, ClosedForm) {
  const Tensor<double> img({3, 1, 1}, {0.3, 0.3, 0.3});
  const auto out = gamma_correction(img, coeff(2, 2, 2), coeff(0.5, 0.5, 0.5), coeff(0.5, 0.5, 0.5));
  const double ref = (std::sqrt(2 * 0.3 + 0.5) - std::sqrt(0.5)) / (std::sqrt(2.5) - std::sqrt(0.5));
  EXPECT_NEAR(out.data()[0], ref, 1e-14);
}

TEST(Gamma, RejectsNonPositiveCoefficients) {
  const auto img = Tensor<double>::full({3, 2, 2}, 0.5);
  EXPECT_EQ(error_of([&] { gamma_correction(img, coeff(1, 0, 1), coeff(1, 1, 1), coeff(1, 1, 1)); }),
            ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { gamma_correction(img, coeff(1, 1, 1), coeff(1, 1, 1), coeff(1, 1, -1)); }),
            ErrorCode::Domain);
  EXPECT_EQ(error_of([&] { gamma_correction(img, Tensor<double>::full({3}, 1.0), coeff(1, 1, 1), coeff(1, 1, 1)); }),
            ErrorCode::ShapeMismatch);
}

TEST(GlobalAdjust, IdentityStagesAreIdentity) {
  std::mt19937_64 rng(5);
  const auto img = random_tensor<double>({3, 8, 8}, rng);
  const auto stages = decode_global_coeffs(Tensor<double>::zeros({4 * kStageOutputs, 1}), 4);
  ASSERT_EQ(stages.size(), 4u);
  for (const auto& s : stages)
    for (int c = 0; c < 3; ++c) {
      EXPECT_DOUBLE_EQ(s.alpha.data()[c], 1.0);
      EXPECT_DOUBLE_EQ(s.gamma.data()[c], 1.0);
      EXPECT_NEAR(s.beta.data()[c], 0.02, 1e-12);
    }
  EXPECT_LT(max_abs_diff(global_adjust(img, stages), img), 1e-6);
}

TEST(GlobalAdjust, DecodedCoefficientsStayPositive) {
  std::mt19937_64 rng(6);
  const auto raw = random_tensor<double>({2 * kStageOutputs, 1}, rng, -30, 30);
  for (const auto& s : decode_global_coeffs(raw, 2))
    for (int c = 0; c < 3; ++c) {
      EXPECT_GT(s.alpha.data()[c], 0);
      EXPECT_GE(s.beta.data()[c], kBetaMin);
      EXPECT_GT(s.gamma.data()[c], 0);
    }
  EXPECT_EQ(error_of([&] { decode_global_coeffs(raw, 3); }), ErrorCode::ShapeMismatch);
}

TEST(GlobalAdjust, CommutesWithPixelPermutation) {
  std::mt19937_64 rng(7);
  const auto img = random_tensor<double>({3, 4, 5}, rng);
  const auto stages = decode_global_coeffs(random_tensor<double>({2 * kStageOutputs, 1}, rng, -0.5, 0.5), 2);
  std::vector<int64_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int64_t> idx;
  for (int c = 0; c < 3; ++c)
    for (int64_t p : perm) idx.push_back(c * 20 + p);
  const auto permute = [&](const Tensor<double>& t) { return gather(t, std::span<const int64_t>(idx), {3, 4, 5}); };
  EXPECT_LT(max_abs_diff(global_adjust(permute(img), stages), permute(global_adjust(img, stages))), 1e-14);
}

TEST(GlobalAdjust, OutputClampedToFour) {
  Tensor<double> raw = Tensor<double>::zeros({kStageOutputs, 1});
  raw.data_mut()[6] = 20.0;  // r -> 21 r
  const auto out = global_adjust(Tensor<double>::full({3, 2, 2}, 1.0), decode_global_coeffs(raw, 1));
  EXPECT_DOUBLE_EQ(out.data()[0], 4.0);
}

class GlobalNetTest : public ::testing::Test {
 protected:
  GlobalNetTest() : rng_(8), arch_(ArchConfig::tiny()) {
    arch_.global_stages = 4;
    net_ = GlobalNet<double>(store_, "g", arch_, rng_);
  }
  Tensor<double> z() { return random_tensor<double>({arch_.z_dim, 1}, rng_, -1, 1); }
  std::mt19937_64 rng_;
  ArchConfig arch_;
  ParamStore<double> store_;
  GlobalNet<double> net_;
};

TEST_F(GlobalNetTest, IdentityAtInitialization) {
  const auto img = random_tensor<double>({3, 32, 32}, rng_);
  EXPECT_LT(max_abs_diff(net_.forward(img, z()), img), 1e-6);
}

TEST_F(GlobalNetTest, HeadHas156Outputs) {
  EXPECT_EQ(store_.find("g.fc2.weight")->dim(0), 156);
  EXPECT_EQ(net_.predict(Tensor<double>::full({3, 16, 16}, 0.5), z()).size(), 4u);
  for (double v : store_.find("g.fc2.weight")->data()) EXPECT_EQ(v, 0.0);
}

TEST_F(GlobalNetTest, RejectsSmallOrUnalignedImages) {
  EXPECT_EQ(error_of([&] { net_.predict(Tensor<double>::zeros({3, 8, 8}), z()); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(error_of([&] { net_.predict(Tensor<double>::zeros({3, 16, 20}), z()); }), ErrorCode::ShapeMismatch);
}

TEST_F(GlobalNetTest, EncoderGradientMatchesFiniteDifferences) {
  perturb_all(store_, rng_, 0.05);
  const auto img = random_tensor<double>({3, 16, 16}, rng_, 0.05, 0.95);
  const auto target = random_tensor<double>({3, 16, 16}, rng_);
  const auto zz = z();
  const auto r = grad_check([&] { return mean(abs(sub(net_.forward(img, zz), target))); },
                            store_.with_prefix("g.enc"), {1e-6, 6, 3});
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(Cbam, SaturatedGatesLeaveInputUnchanged) {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  auto m = make_cbam(store, "c", 8, 4, rng);
  for (auto& v : m.fc2.weight.data_mut()) v = 0;
  for (auto& v : m.fc2.bias.data_mut()) v = 40;
  for (auto& v : m.spatial.weight.data_mut()) v = 0;
  for (auto& v : m.spatial.bias.data_mut()) v = 40;
  const auto x = random_tensor<double>({8, 6, 6}, rng, -1, 1);
  EXPECT_LT(max_abs_diff(m(x), x), 1e-12);
}

TEST(Cbam, ZeroInGivesZeroOutAndGatesInOpenUnitInterval) {
  std::mt19937_64 rng(10);
  ParamStore<double> store;
  const auto m = make_cbam(store, "c", 16, 8, rng);
  const auto out = m(Tensor<double>::zeros({16, 5, 5}));
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
  const auto [ch, sp] = m.gates(random_tensor<double>({16, 9, 9}, rng, -2, 2));
  EXPECT_EQ(ch.shape(), (Shape{16, 1, 1}));
  EXPECT_EQ(sp.shape(), (Shape{1, 9, 9}));
  for (double v : ch.data()) EXPECT_TRUE(v > 0 && v < 1);
  for (double v : sp.data()) EXPECT_TRUE(v > 0 && v < 1);
  EXPECT_EQ(error_of([&] { m(Tensor<double>::zeros({8, 5, 5})); }), ErrorCode::ShapeMismatch);
}

class LocalNetTest : public ::testing::Test {
 protected:
  LocalNetTest() : rng_(11), arch_(ArchConfig::tiny()), net_(store_, "l", arch_, rng_) {}
  Tensor<double> z() { return random_tensor<double>({arch_.z_dim, 1}, rng_, -1, 1); }
  std::mt19937_64 rng_;
  ArchConfig arch_;
  ParamStore<double> store_;
  LocalNet<double> net_;
};

TEST_F(LocalNetTest, ZeroResidualAtInitialization) {
  const auto img = random_tensor<double>({3, 64, 64}, rng_);
  const auto out = net_.forward(img, z());
  EXPECT_EQ(out.shape(), img.shape());
  EXPECT_EQ(std::memcmp(out.data().data(), img.data().data(), sizeof(double) * img.numel()), 0);
}

TEST_F(LocalNetTest, ShapePreservedAtFullPatchSize) {
  ParamStore<float> store;
  std::mt19937_64 rng(12);
  LocalNet<float> net(store, "l", arch_, rng);
  const auto img = random_tensor<float>({3, 448, 448}, rng);
  EXPECT_EQ(net.forward(img, Tensor<float>::zeros({arch_.z_dim, 1})).shape(), img.shape());
}

TEST_F(LocalNetTest, RejectsUnalignedSize) {
  EXPECT_EQ(error_of([&] { net_.forward(Tensor<double>::zeros({3, 18, 16}), z()); }), ErrorCode::ShapeMismatch);
}

TEST_F(LocalNetTest, TranslationCovariantAwayFromBorders) {
  perturb_all(store_, rng_, 0.1);
  // Constant background with a compact blob far from every border: the blob's footprint never reaches
  // the edges, so a 4 pixel shift leaves the pooled statistics unchanged.
  const int64_t h = 96, w = 164, cw = 160;
  Tensor<double> canvas = Tensor<double>::full({3, h, w}, 0.3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 44; y < 52; ++y)
      for (int64_t x = 80; x < 88; ++x) canvas.data_mut()[(c * h + y) * w + x] = u(rng_);
  const auto zz = z();
  const auto a = net_.forward(crop(canvas, 0, 0, h, cw), zz);
  const auto b = net_.forward(crop(canvas, 0, 4, h, cw), zz);
  double worst = 0;
  for (int c = 0; c < 3; ++c)
    for (int64_t y = 24; y < 72; ++y)
      for (int64_t x = 56; x < 104; ++x)
        worst = std::max(worst, std::abs(a.data()[(c * h + y) * cw + x + 4] - b.data()[(c * h + y) * cw + x]));
  EXPECT_LT(worst, 1e-9);
  EXPECT_GT(max_abs_diff(a, crop(canvas, 0, 0, h, cw)), 1e-4);  // the residual is active
}

TEST_F(LocalNetTest, DeterministicInference) {
  perturb_all(store_, rng_, 0.1);
  const auto img = random_tensor<double>({3, 32, 32}, rng_);
  const auto zz = z();
  const auto a = net_.forward(img, zz), b = net_.forward(img, zz);
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.numel()), 0);
}

TEST_F(LocalNetTest, KernelGradientMatchesFiniteDifferences) {
  perturb_all(store_, rng_, 0.05);
  const auto img = random_tensor<double>({3, 16, 16}, rng_, 0.05, 0.95);
  const auto target = random_tensor<double>({3, 16, 16}, rng_);
  const auto zz = z();
  const auto r = grad_check([&] { return mean(abs(sub(net_.forward(img, zz), target))); },
                            {*store_.find("l.stem.weight"), *store_.find("l.out.weight")}, {1e-6, 8, 4});
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(ParamCount, DefaultDirectionWithinEnvelope) {
  const IspModel m(ModelConfig{}, 0);
  EXPECT_LE(m.params().element_count(), 800000);
  EXPECT_GT(m.params().element_count(), 100000);
}

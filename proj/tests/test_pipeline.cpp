#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "paramisp/oracle.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/pipeline.hpp"
#include "paramisp/training.hpp"
#include "test_util.hpp"

using namespace paramisp;
using testutil::error_of;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::sample_cano;

namespace {

ModelConfig config(Direction d, ArchConfig arch = ArchConfig::tiny()) {
  ModelConfig c;
  c.direction = d;
  c.arch = arch;
  return c;
}

void perturb(IspModel& m, std::mt19937_64& rng, double scale = 0.05) {
  std::normal_distribution<double> n(0, scale);
  for (const auto& name : m.params().names()) {
    std::vector<float> v(m.params().find(name)->data().begin(), m.params().find(name)->data().end());
    for (auto& x : v) x += static_cast<float>(n(rng));
    m.set_values(name, v);
  }
}

const OpticalParams kOpt{1.0 / 125, 400, 4, 50};

}  // namespace

TEST(Direction, NamesAndParsing) {
  EXPECT_EQ(parse_direction("fwd"), Direction::Forward);
  EXPECT_EQ(parse_direction("inverse"), Direction::Inverse);
  EXPECT_STREQ(direction_name(Direction::Inverse), "inverse");
  EXPECT_EQ(error_of([] { parse_direction("sideways"); }), ErrorCode::InvalidArgument);
}

TEST(Pipeline, ForwardAtInitIsClampedCanonet) {
  std::mt19937_64 rng(1);
  const IspModel m(config(Direction::Forward), 1);
  const auto cano = sample_cano(rng);
  const auto raw = random_tensor({1, 32, 48}, rng);
  const auto out = m.forward(raw, cano, kOpt);
  const auto ref = clamp(canonet_forward(raw, cano), 0.0f, 1.0f);
  EXPECT_LT(max_abs_diff(out, ref), 1e-6);
}

TEST(Pipeline, InverseAtInitIsCanonetInverse) {
  std::mt19937_64 rng(2);
  const IspModel m(config(Direction::Inverse), 2);
  const auto cano = sample_cano(rng);
  const auto srgb = random_tensor({3, 32, 32}, rng);
  const auto out = m.inverse(srgb, cano, kOpt);
  EXPECT_EQ(out.shape(), (Shape{1, 32, 32}));
  EXPECT_LT(max_abs_diff(out, canonet_inverse(srgb, cano)), 1e-6);
}

TEST(Pipeline, OutputsStayInUnitRangeWithRandomWeights) {
  std::mt19937_64 rng(3);
  IspModel f(config(Direction::Forward), 3), i(config(Direction::Inverse), 4);
  perturb(f, rng, 0.05);
  perturb(i, rng, 0.05);
  const auto cano = sample_cano(rng);
  const auto a = f.forward(random_tensor({1, 32, 32}, rng), cano, kOpt);
  const auto b = i.inverse(random_tensor({3, 32, 32}, rng), cano, kOpt);
  EXPECT_EQ(a.shape(), (Shape{3, 32, 32}));
  for (float v : a.data()) ASSERT_TRUE(v >= 0 && v <= 1);
  for (float v : b.data()) ASSERT_TRUE(v >= 0 && v <= 1);
}

TEST(Pipeline, DirectionIsEnforced) {
  std::mt19937_64 rng(4);
  const IspModel f(config(Direction::Forward), 1), i(config(Direction::Inverse), 1);
  const auto raw = random_tensor({1, 16, 16}, rng);
  const auto srgb = random_tensor({3, 16, 16}, rng);
  EXPECT_EQ(error_of([&] { f.inverse(srgb, {}, kOpt); }), ErrorCode::Direction);
  EXPECT_EQ(error_of([&] { i.forward(raw, {}, kOpt); }), ErrorCode::Direction);
  EXPECT_EQ(error_of([&] { camera_transfer(srgb, f, i, {}, {}, kOpt); }), ErrorCode::Direction);
  EXPECT_EQ(error_of([&] { f.forward(srgb, {}, kOpt); }), ErrorCode::ShapeMismatch);
}

TEST(Pipeline, PaddingIsTransparent) {
  std::mt19937_64 rng(5);
  IspModel m(config(Direction::Forward), 5);
  perturb(m, rng);
  const auto img = random_tensor({3, 50, 38}, rng);
  const auto z = m.conditioning(kOpt, {});
  const auto padded = pad_to_multiple(img, kSpatialMultiple);
  EXPECT_EQ(padded.shape(), (Shape{3, 64, 48}));
  const auto a = m.local_stage(img, z);
  const auto b = crop(m.local_stage(padded, z), 0, 0, 50, 38);
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), sizeof(float) * a.numel()), 0);
  const auto g1 = m.global_stage(img, z);
  const auto g2 = crop(m.global_stage(padded, z), 0, 0, 50, 38);
  EXPECT_EQ(std::memcmp(g1.data().data(), g2.data().data(), sizeof(float) * g1.numel()), 0);
}

TEST(Pipeline, OddSizedInputAtInitMatchesCanonet) {
  std::mt19937_64 rng(6);
  const IspModel m(config(Direction::Forward), 6);
  const auto raw = random_tensor({1, 450, 450}, rng);
  const CanonicalParams cano = sample_cano(rng);
  EXPECT_LT(max_abs_diff(m.forward(raw, cano, kOpt), clamp(canonet_forward(raw, cano), 0.0f, 1.0f)), 1e-5);
}

TEST(Pipeline, PadToMultipleMirrorsBottomRight) {
  const Tensor<double> img({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const auto p = pad_to_multiple(img, 4);
  EXPECT_EQ(p.shape(), (Shape{1, 4, 4}));
  EXPECT_EQ(p.data()[0], 1.0);
  EXPECT_EQ(p.data()[3], 2.0);   // reflect of column 1
  EXPECT_EQ(p.data()[8], 1.0);   // row 2 mirrors row 0
  EXPECT_EQ(pad_to_multiple(Tensor<double>::zeros({1, 4, 8}), 4).shape(), (Shape{1, 4, 8}));
}

TEST(Pipeline, InferenceIsDeterministic) {
  std::mt19937_64 rng(7);
  IspModel m(config(Direction::Forward), 7);
  perturb(m, rng);
  const auto raw = random_tensor({1, 32, 32}, rng);
  const auto a = m.forward(raw, {}, kOpt), b = m.forward(raw, {}, kOpt);
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), sizeof(float) * a.numel()), 0);
}

TEST(Pipeline, CastAndReload) {
  std::mt19937_64 rng(8);
  IspModel m(config(Direction::Forward), 8);
  perturb(m, rng);
  const auto d = m.cast<double>();
  const auto raw = random_tensor({1, 32, 32}, rng);
  const Tensor<double> raw_d({1, 32, 32}, std::vector<double>(raw.data().begin(), raw.data().end()));
  const auto ad = d.forward(raw_d, {}, kOpt);
  const auto af = m.forward(raw, {}, kOpt);
  double worst = 0;
  for (int64_t k = 0; k < af.numel(); ++k) worst = std::max(worst, std::abs(ad.data()[k] - af.data()[k]));
  EXPECT_LT(worst, 1e-4);
  IspModel copy(config(Direction::Forward), 99);
  copy.load_weights_from(m);
  const auto ac = copy.forward(raw, {}, kOpt);
  EXPECT_EQ(std::memcmp(ac.data().data(), af.data().data(), sizeof(float) * af.numel()), 0);
  IspModel other(config(Direction::Forward, ArchConfig::compact()), 1);
  EXPECT_EQ(error_of([&] { other.load_weights_from(m); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(error_of([&] { copy.set_values("nope", std::vector<float>{}); }), ErrorCode::InvalidArgument);
}

TEST(Pipeline, ParamNetAblationGivesZeroConditioning) {
  auto cfg = config(Direction::Forward);
  cfg.arch.use_paramnet = false;
  const IspModel m(cfg, 1);
  const auto z = m.conditioning(kOpt, {});
  for (float v : z.data()) EXPECT_EQ(v, 0.0f);
  for (const auto& n : m.params().names()) EXPECT_EQ(n.rfind("paramnet", 0), std::string::npos);
}

TEST(Transfer, SameCameraAtInitIsCanonetRoundTrip) {
  std::mt19937_64 rng(9);
  const IspModel inv(config(Direction::Inverse), 1), fwd(config(Direction::Forward), 2);
  const auto cano = sample_cano(rng);
  const auto srgb = random_tensor({3, 32, 32}, rng, 0.1, 0.6);
  const auto out = camera_transfer(srgb, inv, fwd, cano, cano, kOpt);
  EXPECT_EQ(out.shape(), srgb.shape());
  const auto ref = clamp(canonet_forward(canonet_inverse(srgb, cano), cano), 0.0f, 1.0f);
  EXPECT_LT(max_abs_diff(out, ref), 1e-6);
  for (float v : out.data()) ASSERT_TRUE(v >= 0 && v <= 1);
}

TEST(Transfer, MovesTowardSecondCamera) {
  OracleCamera a = OracleCamera::make(21), b = a;
  b.name = "oracle-b";
  b.gamma = {0.75, 0.75, 0.75};  // same sensor, different tone curve
  OracleOptions oo;
  oo.count = 12;
  oo.size = 32;
  oo.seed = 4;
  oo.val_fraction = 0.25;
  const Dataset da = make_oracle_dataset(a, oo), db = make_oracle_dataset(b, oo);
  IspModel inv(config(Direction::Inverse), 1), fwd(config(Direction::Forward), 2);
  TrainConfig tc;
  tc.initial_lr = 3e-3;
  tc.epochs = 12;
  tc.patch_size = 32;
  tc.patches_per_camera_per_epoch = 18;
  tc.seed = 3;
  train_stage(nullptr, &inv, da, tc);
  train_stage(&fwd, nullptr, db, tc);
  double before = 0, after = 0;
  for (size_t k = 0; k < da.val.size(); ++k) {
    const auto& sa = da.val[k];
    const auto& sb = db.val[k];
    ASSERT_EQ(sa.id, sb.id);
    const auto moved = camera_transfer(sa.srgb, inv, fwd, a.cano, b.cano, sa.meta.opt);
    before += mean(abs(sub(sa.srgb, sb.srgb))).item();
    after += mean(abs(sub(moved, sb.srgb))).item();
  }
  EXPECT_LT(after, 0.5 * before);
}

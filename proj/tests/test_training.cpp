#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "paramisp/grad_check.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/oracle.hpp"
#include "paramisp/training.hpp"
#include "test_util.hpp"

using namespace paramisp;
using testutil::error_of;
using testutil::message_of;
using testutil::random_tensor;

namespace {

ModelConfig tiny(Direction d) {
  ModelConfig c;
  c.direction = d;
  c.arch = ArchConfig::tiny();
  return c;
}

Dataset small_set(uint64_t cam_seed, int count, int size, uint64_t seed, double val = 0.25) {
  OracleOptions oo;
  oo.count = count;
  oo.size = size;
  oo.seed = seed;
  oo.val_fraction = val;
  return make_oracle_dataset(OracleCamera::make(cam_seed), oo);
}

TrainConfig quick(int epochs, int patches, double lr = 1e-3, int patch = 32) {
  TrainConfig tc;
  tc.initial_lr = lr;
  tc.epochs = epochs;
  tc.patch_size = patch;
  tc.patches_per_camera_per_epoch = patches;
  tc.seed = 1;
  return tc;
}

std::vector<std::vector<float>> weights(const IspModel& m) {
  std::vector<std::vector<float>> w;
  for (const auto& t : m.params().tensors()) w.emplace_back(t.data().begin(), t.data().end());
  return w;
}

}  // namespace

TEST(Schedule, StepDecay) {
  TrainConfig tc;
  EXPECT_DOUBLE_EQ(lr_at(0, tc), 2.0e-4);
  EXPECT_NEAR(lr_at(10, tc), 1.6e-4, 1e-18);
  EXPECT_NEAR(lr_at(25, tc), 1.28e-4, 1e-18);
  EXPECT_DOUBLE_EQ(lr_at(9, tc), 2.0e-4);
  for (int e = 1; e < 300; ++e) EXPECT_LE(lr_at(e, tc), lr_at(e - 1, tc));
  EXPECT_EQ(error_of([&] { lr_at(-1, tc); }), ErrorCode::InvalidArgument);
}

TEST(Schedule, Presets) {
  const auto p = TrainConfig::pretrain_preset(), f = TrainConfig::finetune_preset(), j = TrainConfig::joint_preset();
  EXPECT_EQ(p.stage, Stage::Pretrain);
  EXPECT_DOUBLE_EQ(p.initial_lr, 2e-4);
  EXPECT_EQ(p.patch_size, 448);
  EXPECT_EQ(p.patches_per_camera_per_epoch, 1024);
  EXPECT_EQ(f.stage, Stage::Finetune);
  EXPECT_EQ(j.stage, Stage::Joint);
  EXPECT_DOUBLE_EQ(j.initial_lr, 1e-4);
  EXPECT_EQ(j.epochs, 450);
  EXPECT_DOUBLE_EQ(p.decay_rate, 0.8);
  EXPECT_EQ(p.decay_every, 10);
  EXPECT_DOUBLE_EQ(p.dropout_p, 0.2);
}

TEST(Schedule, ValidateAndStageNames) {
  EXPECT_EQ(parse_stage("joint"), Stage::Joint);
  EXPECT_STREQ(stage_name(Stage::Pretrain), "pretrain");
  EXPECT_EQ(error_of([] { parse_stage("warmup"); }), ErrorCode::InvalidArgument);
  TrainConfig tc;
  tc.patch_size = 30;
  EXPECT_EQ(error_of([&] { tc.validate(); }), ErrorCode::InvalidArgument);
  tc = TrainConfig{};
  tc.initial_lr = 0;
  EXPECT_EQ(error_of([&] { tc.validate(); }), ErrorCode::InvalidArgument);
}

TEST(Loss, L1Examples) {
  std::mt19937_64 rng(1);
  const auto a = random_tensor<double>({3, 4, 4}, rng);
  EXPECT_EQ(l1_loss(a, a).item(), 0.0);
  EXPECT_NEAR(l1_loss(add_scalar(a, 0.1), a).item(), 0.1, 1e-12);
  EXPECT_EQ(error_of([&] { l1_loss(a, Tensor<double>::zeros({3, 4, 5})); }), ErrorCode::ShapeMismatch);
}

TEST(Loss, L1GradientIsSignOverCount) {
  std::mt19937_64 rng(2);
  auto p = random_tensor<double>({2, 3, 5}, rng, 0, 1, true);
  const auto t = random_tensor<double>({2, 3, 5}, rng);
  backward(l1_loss(p, t));
  for (int64_t i = 0; i < p.numel(); ++i) {
    const double s = p.data()[i] > t.data()[i] ? 1.0 : -1.0;
    EXPECT_NEAR(p.grad()[i], s / 30.0, 1e-15);
  }
  p.zero_grad();
  EXPECT_LT(grad_check([&] { return l1_loss(p, t); }, {p}).max_rel_error, 1e-6);
}

TEST(Loss, JointLossBoundsAndGradients) {
  const Dataset d = small_set(1, 2, 32, 1, 0.0);
  std::mt19937_64 rng(3);
  IspModel fwd(tiny(Direction::Forward), 1), inv(tiny(Direction::Inverse), 2);
  std::normal_distribution<double> n(0, 0.05);
  for (IspModel* m : {&fwd, &inv})
    for (const auto& name : m->params().names()) {
      std::vector<float> v(m->params().find(name)->data().begin(), m->params().find(name)->data().end());
      for (auto& x : v) x += static_cast<float>(n(rng));
      m->set_values(name, v);
    }
  const auto& s = d.train[0];
  const auto loss = joint_loss(s.srgb, s.raw, fwd, inv, s.meta.cano, s.meta.opt);
  const auto inv_only = l1_loss(inv.inverse(s.srgb, s.meta.cano, s.meta.opt), s.raw);
  EXPECT_GE(loss.item(), inv_only.item());
  backward(loss);
  auto any_grad = [](const IspModel& m) {
    for (const auto& t : m.params().tensors())
      if (t.has_grad())
        for (float g : t.grad())
          if (g != 0) return true;
    return false;
  };
  EXPECT_TRUE(any_grad(fwd));
  EXPECT_TRUE(any_grad(inv));
  EXPECT_EQ(error_of([&] { joint_loss(s.srgb, s.raw, inv, fwd, s.meta.cano, s.meta.opt); }), ErrorCode::Direction);
}

TEST(Patches, EvenOffsetsAlignedCrops) {
  Dataset d = small_set(2, 3, 48, 2, 0.0);
  TrainConfig tc = quick(1, 40, 1e-3, 16);
  std::mt19937_64 rng(4);
  const auto patches = sample_patches(d.train, tc, rng);
  ASSERT_EQ(patches.size(), 40u);
  for (const auto& p : patches) {
    EXPECT_EQ(p.y % 2, 0);
    EXPECT_EQ(p.x % 2, 0);
    EXPECT_EQ(p.raw.shape(), (Shape{1, 16, 16}));
    EXPECT_EQ(p.srgb.shape(), (Shape{3, 16, 16}));
    const auto& src = d.train[p.sample];
    EXPECT_EQ(p.raw.data()[0], src.raw.data()[p.y * 48 + p.x]);
    EXPECT_EQ(p.srgb.data()[17], src.srgb.data()[(p.y + 1) * 48 + p.x + 1]);
    EXPECT_EQ(p.opt.iso, src.meta.opt.iso);
  }
}

TEST(Patches, PerCameraQuota) {
  Dataset a = small_set(1, 3, 32, 1, 0.0), b = small_set(2, 2, 32, 2, 0.0);
  std::vector<Sample> both = a.train;
  both.insert(both.end(), b.train.begin(), b.train.end());
  TrainConfig tc = quick(1, 8);
  tc.stage = Stage::Pretrain;
  std::mt19937_64 rng(5);
  const auto patches = sample_patches(both, tc, rng);
  EXPECT_EQ(patches.size(), 16u);
  int from_a = 0;
  for (const auto& p : patches) from_a += both[p.sample].camera == a.train[0].camera;
  EXPECT_EQ(from_a, 8);
}

TEST(Patches, DeterministicAndSizeChecked) {
  Dataset d = small_set(3, 4, 32, 3, 0.0);
  TrainConfig tc = quick(1, 12, 1e-3, 16);
  std::mt19937_64 r1(6), r2(6);
  const auto a = sample_patches(d.train, tc, r1), b = sample_patches(d.train, tc, r2);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sample, b[i].sample);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].x, b[i].x);
  }
  tc.patch_size = 64;
  EXPECT_EQ(error_of([&] { sample_patches(d.train, tc, r1); }), ErrorCode::InvalidArgument);
}

TEST(Train, ZeroEpochsLeaveModelUnchanged) {
  const Dataset d = small_set(1, 4, 32, 1);
  IspModel m(tiny(Direction::Forward), 3);
  const auto before = weights(m);
  const auto r = train_stage(&m, nullptr, d, quick(0, 4));
  EXPECT_EQ(r.steps, 0);
  EXPECT_EQ(weights(m), before);
}

TEST(Train, ArityChecked) {
  const Dataset d = small_set(1, 4, 32, 1);
  IspModel f(tiny(Direction::Forward), 1), i(tiny(Direction::Inverse), 1);
  TrainConfig tc = quick(1, 2);
  EXPECT_EQ(error_of([&] { train_stage(&f, &i, d, tc); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(error_of([&] { train_stage(nullptr, nullptr, d, tc); }), ErrorCode::InvalidArgument);
  tc.stage = Stage::Joint;
  EXPECT_EQ(error_of([&] { train_stage(&f, nullptr, d, tc); }), ErrorCode::InvalidArgument);
}

TEST(Train, OverfitLossDecreases) {
  const Dataset d = small_set(4, 4, 32, 4, 0.0);
  IspModel m(tiny(Direction::Forward), 4);
  TrainConfig tc = quick(5, 4);
  tc.dropout_p = 0;
  const auto r = train_stage(&m, nullptr, d, tc);
  ASSERT_EQ(r.log.size(), 5u);
  int upticks = 0;
  for (size_t e = 1; e < r.log.size(); ++e) upticks += r.log[e].train_l1 > r.log[e - 1].train_l1;
  EXPECT_LE(upticks, 1);
  EXPECT_LT(r.log.back().train_l1, r.log.front().train_l1);
  EXPECT_EQ(r.steps, 20);
}

TEST(Train, BitReproducible) {
  const Dataset d = small_set(5, 4, 32, 5);
  IspModel a(tiny(Direction::Inverse), 5), b(tiny(Direction::Inverse), 5);
  train_stage(nullptr, &a, d, quick(2, 3));
  train_stage(nullptr, &b, d, quick(2, 3));
  EXPECT_EQ(weights(a), weights(b));
}

TEST(Train, NonFiniteLossAbortsNamingStep) {
  const Dataset d = small_set(6, 4, 32, 6);
  IspModel m(tiny(Direction::Forward), 6);
  const auto* t = m.params().find("localnet.out.bias");
  m.set_values("localnet.out.bias", std::vector<float>(t->numel(), std::numeric_limits<float>::infinity()));
  std::string msg;
  try {
    train_stage(&m, nullptr, d, quick(1, 2));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
    msg = e.what();
  }
  EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
}

TEST(Train, CsvLogAndEpochHook) {
  const auto path = (std::filesystem::temp_directory_path() / "paramisp_train_log.csv").string();
  std::filesystem::remove(path);
  const Dataset d = small_set(7, 4, 32, 7);
  IspModel m(tiny(Direction::Forward), 7);
  TrainConfig tc = quick(3, 2);
  tc.metrics_csv = path;
  int calls = 0;
  tc.on_epoch = [&](const EpochLog& e) { EXPECT_EQ(e.epoch, calls++); };
  const auto r = train_stage(&m, nullptr, d, tc);
  EXPECT_EQ(calls, 3);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,stage,train_l1,val_l1,val_psnr,lr");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.rfind(std::to_string(rows) + ",finetune,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_GE(r.best_epoch, 0);
  std::filesystem::remove(path);
}

TEST(Train, RestoreBestMatchesBestValidation) {
  const Dataset d = small_set(8, 8, 32, 8);
  IspModel m(tiny(Direction::Forward), 8);
  const auto r = train_stage(&m, nullptr, d, quick(4, 4, 3e-3));
  EXPECT_NEAR(evaluate(m, d.val).l1, r.best_val_l1, 1e-6);
}

TEST(Train, JointKeepsParameterCountsAndImprovesCycle) {
  const Dataset d = small_set(9, 8, 32, 9);
  IspModel f(tiny(Direction::Forward), 1), i(tiny(Direction::Inverse), 2);
  train_stage(&f, nullptr, d, quick(3, 6));
  train_stage(nullptr, &i, d, quick(3, 6));
  const auto nf = f.params().element_count(), ni = i.params().element_count();
  TrainConfig tc = quick(2, 6, 5e-4);
  tc.stage = Stage::Joint;
  const auto r = train_stage(&f, &i, d, tc);
  EXPECT_EQ(f.params().element_count(), nf);
  EXPECT_EQ(i.params().element_count(), ni);
  EXPECT_EQ(r.log.front().stage, Stage::Joint);
  const auto c = evaluate_cycle(f, i, d.val);
  EXPECT_TRUE(std::isfinite(c.psnr));
}

TEST(Train, FinetuneAfterPretrainNoWorseThanPretrainOnly) {
  Dataset a = small_set(10, 6, 32, 10, 0.0), b = small_set(11, 6, 32, 11, 0.0);
  const Dataset target = small_set(12, 8, 32, 12, 0.25);
  Dataset pre;
  pre.train = a.train;
  pre.train.insert(pre.train.end(), b.train.begin(), b.train.end());
  pre.train.insert(pre.train.end(), target.train.begin(), target.train.end());
  IspModel m(tiny(Direction::Forward), 10);
  TrainConfig tp = quick(3, 4, 2e-3);
  tp.stage = Stage::Pretrain;
  train_stage(&m, nullptr, pre, tp);
  const double pre_only = evaluate(m, target.val).l1;
  TrainConfig tf = quick(4, 6, 1e-3);
  train_stage(&m, nullptr, target, tf);
  EXPECT_LE(evaluate(m, target.val).l1, pre_only);
}

TEST(Oracle, PairsMatchGroundTruthTone) {
  const auto cam = OracleCamera::make(3, true);
  OracleOptions oo;
  oo.count = 4;
  oo.size = 32;
  oo.seed = 2;
  oo.val_fraction = 0;
  for (const auto& s : make_oracle_dataset(cam, oo).train) {
    const Tensor<double> raw({1, 32, 32}, std::vector<double>(s.raw.data().begin(), s.raw.data().end()));
    const auto expect = cam.tone(canonet_forward(raw, cam.cano), s.meta.opt.iso);
    double worst = 0;
    for (int64_t i = 0; i < expect.numel(); ++i) worst = std::max(worst, std::abs(expect.data()[i] - s.srgb.data()[i]));
    EXPECT_LT(worst, 1e-5);
    EXPECT_EQ(s.meta.black_level, cam.black_level);
  }
}

TEST(Oracle, IsoDriftChangesExponent) {
  const auto flat = OracleCamera::make(1, false), drift = OracleCamera::make(1, true);
  EXPECT_EQ(flat.gamma_at(100), flat.gamma_at(6400));
  EXPECT_LT(drift.gamma_at(100)[0], drift.gamma_at(6400)[0]);
  EXPECT_NEAR(drift.gamma_at(800)[1], drift.gamma[1], 1e-12);  // midpoint in log ISO
}

TEST(Oracle, SplitAndArguments) {
  const Dataset d = small_set(1, 20, 16, 3, 0.1);
  EXPECT_EQ(d.val.size(), 2u);
  EXPECT_EQ(d.train.size(), 18u);
  OracleOptions oo;
  oo.count = 0;
  EXPECT_EQ(error_of([&] { make_oracle_dataset(OracleCamera::make(1), oo); }), ErrorCode::InvalidArgument);
}

TEST(Oracle, GenerationIsFast) {
  OracleOptions oo;
  oo.count = 64;
  oo.size = 64;
  const auto t0 = std::chrono::steady_clock::now();
  make_oracle_dataset(OracleCamera::make(2, true), oo);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
}

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "paramisp/dataset.hpp"
#include "paramisp/pipeline.hpp"

namespace paramisp {

enum class Stage { Pretrain, Finetune, Joint };

const char* stage_name(Stage s) noexcept;
Stage parse_stage(std::string_view name);

struct EpochLog {
  int epoch = 0;
  Stage stage = Stage::Finetune;
  double train_l1 = 0;
  double val_l1 = 0;    // NaN without a validation split
  double val_psnr = 0;  // NaN without a validation split
  double lr = 0;
};

struct TrainConfig {
  Stage stage = Stage::Finetune;
  double initial_lr = 2e-4;
  int epochs = 10;
  double decay_rate = 0.8;
  int decay_every = 10;
  int patch_size = 64;
  int patches_per_camera_per_epoch = 16;
  /// Patches whose gradients are accumulated into one optimizer step.
  int batch_size = 1;
  double dropout_p = 0.2;
  double weight_decay = 0.0;
  uint64_t seed = 0;
  /// Stop after this many optimizer steps (0: no limit).
  int64_t max_steps = 0;
  /// Reload the weights of the best validation epoch at the end.
  bool restore_best = true;
  /// Append one CSV line per epoch here when non-empty.
  std::string metrics_csv;
  std::function<void(const EpochLog&)> on_epoch;

  /// Large-scale schedules; desk runs shrink epochs and patch size.
  static TrainConfig pretrain_preset();
  static TrainConfig finetune_preset();
  static TrainConfig joint_preset();
  void validate() const;
};

/// initial_lr * decay_rate^floor(epoch / decay_every)
double lr_at(int epoch, const TrainConfig& cfg);

/// Mean absolute difference.
template <class T> Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <class T>
Tensor<T> joint_loss(const Tensor<T>& srgb, const Tensor<T>& raw, const IspModelT<T>& fwd, const IspModelT<T>& inv,
                     const CanonicalParams& cano, const OpticalParams& opt, const RunContext& ctx = {});

struct Patch {
  size_t sample = 0;  // index into the sample list
  int64_t y = 0, x = 0;
  Tensor<float> raw;
  Tensor<float> srgb;
  CanonicalParams cano;
  OpticalParams opt;
};

/// patches_per_camera_per_epoch crops per camera, shuffled; offsets are even.
std::vector<Patch> sample_patches(const std::vector<Sample>& samples, const TrainConfig& cfg, std::mt19937_64& rng);

struct TrainResult {
  std::vector<EpochLog> log;
  int64_t steps = 0;
  int best_epoch = -1;
  double best_val_l1 = 0;
};

/// Pretrain/finetune take exactly one model (fwd or inv); joint takes both.
TrainResult train_stage(IspModel* fwd, IspModel* inv, const Dataset& data, const TrainConfig& cfg);

struct EvalResult {
  double l1 = 0;
  double psnr = 0;
};

/// Mean full-image L1 and PSNR of one model in its own direction.
EvalResult evaluate(const IspModel& model, const std::vector<Sample>& samples);
/// Mean cyclic L1 and PSNR of fwd(inv(srgb)) against srgb.
EvalResult evaluate_cycle(const IspModel& fwd, const IspModel& inv, const std::vector<Sample>& samples);

}  // namespace paramisp

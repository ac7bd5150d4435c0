#include "paramisp/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "paramisp/error.hpp"
#include "paramisp/metrics.hpp"
#include "paramisp/ops.hpp"
#include "paramisp/optim.hpp"

namespace paramisp {

const char* stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::Pretrain: return "pretrain";
    case Stage::Finetune: return "finetune";
    case Stage::Joint: return "joint";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "pretrain") return Stage::Pretrain;
  if (name == "finetune") return Stage::Finetune;
  if (name == "joint") return Stage::Joint;
  raise(ErrorCode::InvalidArgument, "unknown stage '", name, "' (expected pretrain, finetune or joint)");
}

TrainConfig TrainConfig::pretrain_preset() {
  TrainConfig c;
  c.stage = Stage::Pretrain;
  c.initial_lr = 2e-4;
  c.epochs = 520;
  c.patch_size = 448;
  c.patches_per_camera_per_epoch = 1024;
  return c;
}

TrainConfig TrainConfig::finetune_preset() {
  TrainConfig c = pretrain_preset();
  c.stage = Stage::Finetune;
  c.initial_lr = 2e-5;
  c.epochs = 2140;
  return c;
}

TrainConfig TrainConfig::joint_preset() {
  TrainConfig c = pretrain_preset();
  c.stage = Stage::Joint;
  c.initial_lr = 1e-4;
  c.epochs = 450;
  return c;
}

void TrainConfig::validate() const {
  if (!(initial_lr > 0) || !std::isfinite(initial_lr))
    raise(ErrorCode::InvalidArgument, "initial_lr must be positive, got ", initial_lr);
  if (epochs < 0) raise(ErrorCode::InvalidArgument, "epochs must be >= 0, got ", epochs);
  if (!(decay_rate > 0 && decay_rate <= 1)) raise(ErrorCode::InvalidArgument, "decay_rate must be in (0,1]");
  if (decay_every < 1) raise(ErrorCode::InvalidArgument, "decay_every must be >= 1");
  if (patch_size < 4 || patch_size % 4 != 0)
    raise(ErrorCode::InvalidArgument, "patch_size must be a positive multiple of 4, got ", patch_size);
  if (patches_per_camera_per_epoch < 1) raise(ErrorCode::InvalidArgument, "patches_per_camera_per_epoch must be >= 1");
  if (batch_size < 1) raise(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(dropout_p >= 0 && dropout_p < 1)) raise(ErrorCode::InvalidArgument, "dropout_p must be in [0,1)");
  if (!(weight_decay >= 0)) raise(ErrorCode::InvalidArgument, "weight_decay must be >= 0");
  if (max_steps < 0) raise(ErrorCode::InvalidArgument, "max_steps must be >= 0");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) raise(ErrorCode::InvalidArgument, "lr_at: epoch must be >= 0, got ", epoch);
  return cfg.initial_lr * std::pow(cfg.decay_rate, epoch / cfg.decay_every);
}

template <class T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape())
    raise(ErrorCode::ShapeMismatch, "l1_loss: ", shape_str(pred.shape()), " vs ", shape_str(target.shape()));
  return mean(abs(sub(pred, target)));
}

template <class T>
Tensor<T> joint_loss(const Tensor<T>& srgb, const Tensor<T>& raw, const IspModelT<T>& fwd, const IspModelT<T>& inv,
                     const CanonicalParams& cano, const OpticalParams& opt, const RunContext& ctx) {
  if (fwd.direction() != Direction::Forward || inv.direction() != Direction::Inverse)
    raise(ErrorCode::Direction, "joint_loss needs a forward and an inverse model");
  const Tensor<T> raw_hat = inv.inverse(srgb, cano, opt, ctx);
  return add(l1_loss(fwd.forward(raw_hat, cano, opt, ctx), srgb), l1_loss(raw_hat, raw));
}

std::vector<Patch> sample_patches(const std::vector<Sample>& samples, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (samples.empty()) raise(ErrorCode::InvalidArgument, "sample_patches: no training samples");
  std::map<std::string, std::vector<size_t>> by_camera;
  for (size_t i = 0; i < samples.size(); ++i) by_camera[samples[i].camera].push_back(i);
  const int64_t ps = cfg.patch_size;
  std::vector<Patch> out;
  NoGradGuard no_grad;
  for (const auto& [camera, idx] : by_camera) {
    for (int q = 0; q < cfg.patches_per_camera_per_epoch; ++q) {
      const size_t si = idx[std::uniform_int_distribution<size_t>(0, idx.size() - 1)(rng)];
      const Sample& s = samples[si];
      const int64_t h = s.raw.dim(1), w = s.raw.dim(2);
      if (h < ps || w < ps)
        raise(ErrorCode::InvalidArgument, "sample '", s.id, "' (", h, "x", w, ") is smaller than patch ", ps);
      Patch p;
      p.sample = si;
      p.y = 2 * std::uniform_int_distribution<int64_t>(0, (h - ps) / 2)(rng);
      p.x = 2 * std::uniform_int_distribution<int64_t>(0, (w - ps) / 2)(rng);
      p.raw = crop(s.raw, p.y, p.x, ps, ps);
      p.srgb = crop(s.srgb, p.y, p.x, ps, ps);
      p.cano = s.meta.cano;
      p.opt = s.meta.opt;
      out.push_back(std::move(p));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

EvalResult evaluate(const IspModel& model, const std::vector<Sample>& samples) {
  EvalResult r;
  if (samples.empty()) return r;
  NoGradGuard no_grad;
  for (const auto& s : samples) {
    const bool fwd = model.direction() == Direction::Forward;
    const Tensor<float> pred = fwd ? model.forward(s.raw, s.meta.cano, s.meta.opt)
                                   : model.inverse(s.srgb, s.meta.cano, s.meta.opt);
    const Tensor<float>& ref = fwd ? s.srgb : s.raw;
    r.l1 += l1_loss(pred, ref).item();
    r.psnr += psnr(pred, ref);
  }
  r.l1 /= static_cast<double>(samples.size());
  r.psnr /= static_cast<double>(samples.size());
  return r;
}

EvalResult evaluate_cycle(const IspModel& fwd, const IspModel& inv, const std::vector<Sample>& samples) {
  EvalResult r;
  if (samples.empty()) return r;
  NoGradGuard no_grad;
  for (const auto& s : samples) {
    const Tensor<float> cyc = fwd.forward(inv.inverse(s.srgb, s.meta.cano, s.meta.opt), s.meta.cano, s.meta.opt);
    r.l1 += l1_loss(cyc, s.srgb).item();
    r.psnr += psnr(cyc, s.srgb);
  }
  r.l1 /= static_cast<double>(samples.size());
  r.psnr /= static_cast<double>(samples.size());
  return r;
}

namespace {

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(const std::vector<Tensor<float>>& params) {
  Snapshot s;
  for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
  return s;
}

void restore(const std::vector<Tensor<float>>& params, const Snapshot& s) {
  for (size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].node().data.data();
    std::copy(s[i].begin(), s[i].end(), d);
  }
}

void append_csv(const std::string& path, const EpochLog& e) {
  bool fresh;
  {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    fresh = !probe || probe.tellg() == 0;
  }
  std::ofstream f(path, std::ios::app);
  if (!f) raise(ErrorCode::Io, "cannot open metrics log '", path, "'");
  if (fresh) f << "epoch,stage,train_l1,val_l1,val_psnr,lr\n";
  f.precision(9);
  f << e.epoch << ',' << stage_name(e.stage) << ',' << e.train_l1 << ',' << e.val_l1 << ',' << e.val_psnr << ','
    << e.lr << '\n';
  if (!f) raise(ErrorCode::Io, "write to metrics log '", path, "' failed");
}

}  // namespace

TrainResult train_stage(IspModel* fwd, IspModel* inv, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (fwd && fwd->direction() != Direction::Forward) raise(ErrorCode::Direction, "fwd model is not a forward model");
  if (inv && inv->direction() != Direction::Inverse) raise(ErrorCode::Direction, "inv model is not an inverse model");
  if (cfg.stage == Stage::Joint) {
    if (!fwd || !inv) raise(ErrorCode::InvalidArgument, "joint stage needs both a forward and an inverse model");
  } else if ((fwd != nullptr) == (inv != nullptr)) {
    raise(ErrorCode::InvalidArgument, stage_name(cfg.stage), " stage trains exactly one model");
  }
  if (data.train.empty()) raise(ErrorCode::InvalidArgument, "training split is empty");

  std::vector<Tensor<float>> params;
  if (fwd) params = fwd->trainable();
  if (inv) {
    auto p = inv->trainable();
    params.insert(params.end(), p.begin(), p.end());
  }
  AdamWOptions aopt;
  aopt.lr = lr_at(0, cfg);
  aopt.weight_decay = cfg.weight_decay;
  AdamW<float> optim(params, aopt);

  std::seed_seq seq{cfg.seed, uint64_t{0x7061747368}};
  std::mt19937_64 patch_rng(seq);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  RunContext ctx{true, cfg.dropout_p, &dropout_rng};

  auto val_metrics = [&]() -> EvalResult {
    if (cfg.stage == Stage::Joint) {
      EvalResult cyc = evaluate_cycle(*fwd, *inv, data.val);
      cyc.l1 += evaluate(*inv, data.val).l1;
      return cyc;
    }
    return evaluate(fwd ? *fwd : *inv, data.val);
  };

  TrainResult result;
  Snapshot best;
  result.best_val_l1 = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
    optim.set_lr(lr_at(epoch, cfg));
    const auto patches = sample_patches(data.train, cfg, patch_rng);
    double loss_sum = 0;
    size_t loss_count = 0;
    for (size_t b = 0; b < patches.size(); b += static_cast<size_t>(cfg.batch_size)) {
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
      const size_t e = std::min(patches.size(), b + static_cast<size_t>(cfg.batch_size));
      const float scale = 1.0f / static_cast<float>(e - b);
      optim.zero_grad();
      try {
        for (size_t i = b; i < e; ++i) {
          const Patch& p = patches[i];
          Tensor<float> loss;
          if (cfg.stage == Stage::Joint)
            loss = joint_loss(p.srgb, p.raw, *fwd, *inv, p.cano, p.opt, ctx);
          else if (fwd)
            loss = l1_loss(fwd->forward(p.raw, p.cano, p.opt, ctx), p.srgb);
          else
            loss = l1_loss(inv->inverse(p.srgb, p.cano, p.opt, ctx), p.raw);
          const double lv = loss.item();
          if (!std::isfinite(lv)) raise(ErrorCode::NonFinite, "loss is ", lv);
          loss_sum += lv;
          ++loss_count;
          backward(mul_scalar(loss, scale));
        }
        optim.step();
      } catch (const Error& err) {
        // Out-of-domain intermediates after the first step come from blown-up weights.
        const bool diverged =
            err.code() == ErrorCode::NonFinite || (err.code() == ErrorCode::Domain && result.steps > 0);
        if (!diverged) throw;
        raise(ErrorCode::NonFinite, "training aborted: non-finite loss at step ", result.steps, " (epoch ", epoch,
              ", stage ", stage_name(cfg.stage), "): ", err.what());
      }
      ++result.steps;
    }
    EpochLog log;
    log.epoch = epoch;
    log.stage = cfg.stage;
    log.lr = optim.lr();
    log.train_l1 = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    log.val_l1 = log.val_psnr = std::numeric_limits<double>::quiet_NaN();
    if (!data.val.empty()) {
      EvalResult v;
      try {
        v = val_metrics();
      } catch (const Error& err) {
        if (err.code() != ErrorCode::Domain && err.code() != ErrorCode::NonFinite) throw;
        raise(ErrorCode::NonFinite, "training aborted: validation failed after epoch ", epoch, ": ", err.what());
      }
      log.val_l1 = v.l1;
      log.val_psnr = v.psnr;
      if (!std::isfinite(v.l1)) raise(ErrorCode::NonFinite, "validation loss is non-finite after epoch ", epoch);
      if (v.l1 < result.best_val_l1) {
        result.best_val_l1 = v.l1;
        result.best_epoch = epoch;
        if (cfg.restore_best) best = snapshot(params);
      }
    }
    result.log.push_back(log);
    if (!cfg.metrics_csv.empty()) append_csv(cfg.metrics_csv, log);
    if (cfg.on_epoch) cfg.on_epoch(log);
  }
  if (cfg.restore_best && !best.empty()) restore(params, best);
  return result;
}

template Tensor<float> l1_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> l1_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> joint_loss(const Tensor<float>&, const Tensor<float>&, const IspModelT<float>&,
                                  const IspModelT<float>&, const CanonicalParams&, const OpticalParams&,
                                  const RunContext&);
template Tensor<double> joint_loss(const Tensor<double>&, const Tensor<double>&, const IspModelT<double>&,
                                   const IspModelT<double>&, const CanonicalParams&, const OpticalParams&,
                                   const RunContext&);

}  // namespace paramisp

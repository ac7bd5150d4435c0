#include "paramisp/paramisp.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "paramisp/checkpoint.hpp"
#include "paramisp/dataset.hpp"
#include "paramisp/error.hpp"
#include "paramisp/gradcheck_suite.hpp"
#include "paramisp/hdr.hpp"
#include "paramisp/io.hpp"
#include "paramisp/metrics.hpp"
#include "paramisp/oracle.hpp"
#include "paramisp/pipeline.hpp"
#include "paramisp/training.hpp"

struct pisp_model {
  paramisp::IspModel model;
};

namespace {

using namespace paramisp;

#ifndef PISP_VERSION_STRING
#define PISP_VERSION_STRING "0.0.0"
#endif

thread_local std::string g_last_error;

pisp_status to_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return PISP_INVALID_ARGUMENT;
    case ErrorCode::ShapeMismatch: return PISP_SHAPE;
    case ErrorCode::Domain: return PISP_DOMAIN;
    case ErrorCode::NonFinite: return PISP_NON_FINITE;
    case ErrorCode::Io: return PISP_IO;
    case ErrorCode::Format: return PISP_FORMAT;
    case ErrorCode::Direction: return PISP_DIRECTION;
    case ErrorCode::Version: return PISP_VERSION;
  }
  return PISP_INTERNAL;
}

template <class F>
pisp_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return PISP_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PISP_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PISP_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) raise(ErrorCode::InvalidArgument, what, " must not be null");
}

ArchConfig arch_for(pisp_arch a) {
  switch (a) {
    case PISP_ARCH_DEFAULT: return ArchConfig{};
    case PISP_ARCH_COMPACT: return ArchConfig::compact();
    case PISP_ARCH_TINY: return ArchConfig::tiny();
  }
  raise(ErrorCode::InvalidArgument, "unknown architecture preset ", static_cast<int>(a));
}

std::vector<std::string> dirs(const char* const* d, size_t n) {
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    need(d[i], "dataset directory");
    out.emplace_back(d[i]);
  }
  return out;
}

void camera_from_c(const pisp_camera* c, CanonicalParams& cano, OpticalParams& opt) {
  need(c, "camera");
  if (c->pattern < PISP_RGGB || c->pattern > PISP_GBRG) raise(ErrorCode::InvalidArgument, "unknown Bayer pattern");
  cano.pattern = static_cast<BayerPattern>(c->pattern);
  for (int i = 0; i < 3; ++i) cano.wb_gains[i] = c->wb_gains[i];
  for (int i = 0; i < 9; ++i) cano.ccm[i] = c->ccm[i];
  opt = {c->exposure_time_s, c->iso, c->f_number, c->focal_length_mm};
  cano.validate();
  opt.validate();
}

SidecarMetadata meta_for(const char* image, const char* meta) {
  return read_sidecar(meta ? std::string(meta) : sidecar_path_for(image));
}

}  // namespace

extern "C" {

const char* pisp_version(void) { return PISP_VERSION_STRING; }

const char* pisp_status_string(pisp_status s) {
  switch (s) {
    case PISP_OK: return "ok";
    case PISP_INVALID_ARGUMENT: return "invalid argument";
    case PISP_SHAPE: return "shape mismatch";
    case PISP_DOMAIN: return "domain error";
    case PISP_NON_FINITE: return "non-finite value";
    case PISP_IO: return "i/o error";
    case PISP_FORMAT: return "format error";
    case PISP_DIRECTION: return "direction mismatch";
    case PISP_VERSION: return "version mismatch";
    case PISP_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pisp_last_error(void) { return g_last_error.c_str(); }

void pisp_model_options_init(pisp_model_options* o) {
  if (!o) return;
  *o = {};
  o->direction = PISP_FORWARD;
  o->arch = PISP_ARCH_DEFAULT;
  o->use_paramnet = 1;
  o->normalize_params = 1;
}

void pisp_train_options_init(pisp_train_options* o) {
  if (!o) return;
  *o = {};
  const TrainConfig d;
  o->stage = PISP_FINETUNE;
  o->epochs = d.epochs;
  o->lr = d.initial_lr;
  o->patch_size = d.patch_size;
  o->patches_per_camera = d.patches_per_camera_per_epoch;
  o->batch_size = d.batch_size;
  o->dropout_p = d.dropout_p;
  o->weight_decay = d.weight_decay;
}

void pisp_synth_options_init(pisp_synth_options* o) {
  if (!o) return;
  *o = {};
  const OracleOptions d;
  o->n = d.count;
  o->size = d.size;
  o->val_fraction = d.val_fraction;
}

pisp_status pisp_model_create(const pisp_model_options* o, pisp_model** out) {
  return guarded([&] {
    need(o, "options");
    need(out, "out");
    *out = nullptr;
    if (o->direction != PISP_FORWARD && o->direction != PISP_INVERSE)
      raise(ErrorCode::InvalidArgument, "direction must be forward or inverse");
    ModelConfig cfg;
    cfg.direction = static_cast<Direction>(o->direction);
    cfg.arch = arch_for(o->arch);
    cfg.arch.use_paramnet = o->use_paramnet != 0;
    if (o->n_fit_dirs > 0) {
      need(o->fit_dirs, "fit_dirs");
      const Dataset data = load_datasets(dirs(o->fit_dirs, o->n_fit_dirs));
      std::vector<OpticalParams> optics;
      for (const auto& s : data.train) optics.push_back(s.meta.opt);
      cfg.equalization = EqualizationConfig::fit(optics);
    }
    cfg.equalization.normalize = o->normalize_params != 0;
    *out = new pisp_model{IspModel(cfg, o->seed)};
  });
}

pisp_status pisp_model_load(const char* path, pisp_direction expected, pisp_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    std::optional<Direction> want;
    if (expected == PISP_FORWARD || expected == PISP_INVERSE) want = static_cast<Direction>(expected);
    else if (expected != PISP_ANY_DIRECTION) raise(ErrorCode::InvalidArgument, "bad expected direction");
    *out = new pisp_model{load_checkpoint(path, want)};
  });
}

pisp_status pisp_model_save(const pisp_model* m, const char* path) {
  return guarded([&] {
    need(m, "model");
    need(path, "path");
    save_checkpoint(m->model, path);
  });
}

void pisp_model_free(pisp_model* m) { delete m; }

pisp_status pisp_model_direction(const pisp_model* m, pisp_direction* out) {
  return guarded([&] {
    need(m, "model");
    need(out, "out");
    *out = static_cast<pisp_direction>(m->model.direction());
  });
}

pisp_status pisp_model_param_count(const pisp_model* m, int64_t* out) {
  return guarded([&] {
    need(m, "model");
    need(out, "out");
    *out = m->model.params().element_count();
  });
}

pisp_status pisp_raw_to_rgb(const pisp_model* fwd, const float* raw, int64_t w, int64_t h, const pisp_camera* cam,
                            float* rgb_out) {
  return guarded([&] {
    need(fwd, "model");
    need(raw, "raw");
    need(rgb_out, "rgb_out");
    if (w <= 0 || h <= 0) raise(ErrorCode::InvalidArgument, "image dimensions must be positive");
    CanonicalParams cano;
    OpticalParams opt;
    camera_from_c(cam, cano, opt);
    NoGradGuard ng;
    const Tensor<float> in({1, h, w}, std::vector<float>(raw, raw + h * w));
    const auto out = fwd->model.forward(in, cano, opt);
    std::memcpy(rgb_out, out.data().data(), sizeof(float) * static_cast<size_t>(out.numel()));
  });
}

pisp_status pisp_rgb_to_raw(const pisp_model* inv, const float* rgb, int64_t w, int64_t h, const pisp_camera* cam,
                            float* raw_out) {
  return guarded([&] {
    need(inv, "model");
    need(rgb, "rgb");
    need(raw_out, "raw_out");
    if (w <= 0 || h <= 0) raise(ErrorCode::InvalidArgument, "image dimensions must be positive");
    CanonicalParams cano;
    OpticalParams opt;
    camera_from_c(cam, cano, opt);
    NoGradGuard ng;
    const Tensor<float> in({3, h, w}, std::vector<float>(rgb, rgb + 3 * h * w));
    const auto out = inv->model.inverse(in, cano, opt);
    std::memcpy(raw_out, out.data().data(), sizeof(float) * static_cast<size_t>(out.numel()));
  });
}

pisp_status pisp_raw2rgb_file(const pisp_model* fwd, const char* pgm, const char* meta, const char* out_ppm) {
  return guarded([&] {
    need(fwd, "model");
    need(pgm, "input");
    need(out_ppm, "output");
    const RawFile rf = load_raw(pgm, meta ? std::string(meta) : sidecar_path_for(pgm));
    NoGradGuard ng;
    save_srgb(fwd->model.forward(rf.raw, rf.meta.cano, rf.meta.opt), out_ppm, 16);
  });
}

pisp_status pisp_rgb2raw_file(const pisp_model* inv, const char* ppm, const char* meta, const char* out_pgm) {
  return guarded([&] {
    need(inv, "model");
    need(ppm, "input");
    need(out_pgm, "output");
    const SidecarMetadata md = meta_for(ppm, meta);
    const Tensor<float> srgb = load_srgb(ppm);
    NoGradGuard ng;
    save_raw(inv->model.inverse(srgb, md.cano, md.opt), md, out_pgm, sidecar_path_for(out_pgm));
  });
}

pisp_status pisp_hdr_file(const pisp_model* inv, const pisp_model* fwd, const char* ppm, const char* meta,
                          const double* gains, size_t n_gains, const char* out_ppm) {
  return guarded([&] {
    need(inv, "inverse model");
    need(fwd, "forward model");
    need(ppm, "input");
    need(out_ppm, "output");
    FusionConfig cfg;
    if (n_gains > 0) {
      need(gains, "gains");
      cfg.gains.assign(gains, gains + n_gains);
    }
    const SidecarMetadata md = meta_for(ppm, meta);
    save_srgb(hdr_reconstruct(load_srgb(ppm), inv->model, fwd->model, md.cano, md.opt, cfg), out_ppm, 16);
  });
}

pisp_status pisp_transfer_file(const pisp_model* inv_a, const pisp_model* fwd_b, const char* ppm, const char* meta_a,
                               const char* meta_b, const char* out_ppm) {
  return guarded([&] {
    need(inv_a, "inverse model");
    need(fwd_b, "forward model");
    need(ppm, "input");
    need(out_ppm, "output");
    const SidecarMetadata a = meta_for(ppm, meta_a);
    const SidecarMetadata b = meta_b ? read_sidecar(meta_b) : a;
    NoGradGuard ng;
    save_srgb(camera_transfer(load_srgb(ppm), inv_a->model, fwd_b->model, a.cano, b.cano, a.opt), out_ppm, 16);
  });
}

pisp_status pisp_eval_files(const char* pred, const char* ref, double* psnr_out, double* ssim_out) {
  return guarded([&] {
    need(pred, "pred");
    need(ref, "ref");
    const Tensor<float> p = load_srgb(pred), r = load_srgb(ref);
    if (psnr_out) *psnr_out = psnr(p, r);
    if (ssim_out) *ssim_out = ssim(p, r);
  });
}

pisp_status pisp_synth(const pisp_synth_options* o, const char* out_dir) {
  return guarded([&] {
    need(o, "options");
    need(out_dir, "out_dir");
    OracleOptions opts;
    opts.count = o->n;
    opts.size = o->size;
    opts.seed = o->seed;
    opts.val_fraction = o->val_fraction;
    opts.highlights = o->highlights != 0;
    opts.noise = o->noise != 0;
    write_oracle_dataset(OracleCamera::make(o->camera_seed, o->iso_drift != 0), opts, out_dir);
  });
}

pisp_status pisp_train(pisp_model* fwd, pisp_model* inv, const pisp_train_options* o, pisp_train_summary* summary) {
  return guarded([&] {
    need(o, "options");
    if (o->n_data_dirs == 0) raise(ErrorCode::InvalidArgument, "at least one dataset directory is required");
    need(o->data_dirs, "data_dirs");
    if (o->stage < PISP_PRETRAIN || o->stage > PISP_JOINT) raise(ErrorCode::InvalidArgument, "unknown stage");
    TrainConfig cfg;
    cfg.stage = static_cast<Stage>(o->stage);
    cfg.epochs = o->epochs;
    cfg.initial_lr = o->lr;
    cfg.seed = o->seed;
    cfg.patch_size = o->patch_size;
    cfg.patches_per_camera_per_epoch = o->patches_per_camera;
    cfg.batch_size = o->batch_size;
    cfg.dropout_p = o->dropout_p;
    cfg.weight_decay = o->weight_decay;
    cfg.max_steps = o->max_steps;
    if (o->metrics_csv) cfg.metrics_csv = o->metrics_csv;
    const Dataset data = load_datasets(dirs(o->data_dirs, o->n_data_dirs));
    const TrainResult r = train_stage(fwd ? &fwd->model : nullptr, inv ? &inv->model : nullptr, data, cfg);
    if (summary) {
      *summary = {};
      summary->steps = r.steps;
      summary->epochs_run = static_cast<int>(r.log.size());
      summary->best_epoch = r.best_epoch;
      summary->best_val_l1 = r.best_val_l1;
      if (!r.log.empty()) {
        summary->final_train_l1 = r.log.back().train_l1;
        summary->final_val_psnr = r.log.back().val_psnr;
      }
    }
  });
}

pisp_status pisp_gradcheck(uint64_t seed, pisp_gradcheck_entry* entries, size_t capacity, size_t* count) {
  return guarded([&] {
    if (capacity > 0) need(entries, "entries");
    const auto res = run_gradcheck_suite(seed);
    if (count) *count = res.size();
    for (size_t i = 0; i < res.size() && i < capacity; ++i) {
      std::memset(entries[i].name, 0, sizeof(entries[i].name));
      std::strncpy(entries[i].name, res[i].name.c_str(), sizeof(entries[i].name) - 1);
      entries[i].max_rel_error = res[i].max_rel_error;
    }
  });
}

}  // extern "C"

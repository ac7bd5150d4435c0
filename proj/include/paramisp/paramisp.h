/* C interface to the paramisp library. All functions return a pisp_status;
 * on failure pisp_last_error() describes the problem (per thread). */
#ifndef PARAMISP_H
#define PARAMISP_H

#include <stddef.h>
#include <stdint.h>

#if defined(PISP_BUILDING_LIBRARY)
#define PISP_API __attribute__((visibility("default")))
#else
#define PISP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct pisp_model pisp_model;

typedef enum pisp_status {
  PISP_OK = 0,
  PISP_INVALID_ARGUMENT = 1,
  PISP_SHAPE = 2,
  PISP_DOMAIN = 3,
  PISP_NON_FINITE = 4,
  PISP_IO = 5,
  PISP_FORMAT = 6,
  PISP_DIRECTION = 7,
  PISP_VERSION = 8,
  PISP_INTERNAL = 9
} pisp_status;

typedef enum pisp_direction { PISP_FORWARD = 0, PISP_INVERSE = 1, PISP_ANY_DIRECTION = -1 } pisp_direction;

typedef enum pisp_arch { PISP_ARCH_DEFAULT = 0, PISP_ARCH_COMPACT = 1, PISP_ARCH_TINY = 2 } pisp_arch;

typedef enum pisp_bayer { PISP_RGGB = 0, PISP_BGGR = 1, PISP_GRBG = 2, PISP_GBRG = 3 } pisp_bayer;

typedef enum pisp_stage { PISP_PRETRAIN = 0, PISP_FINETUNE = 1, PISP_JOINT = 2 } pisp_stage;

/* Canonical and optical parameters of one capture. */
typedef struct pisp_camera {
  pisp_bayer pattern;
  double wb_gains[3];
  double ccm[9]; /* row-major, camera RGB to linear sRGB */
  double exposure_time_s;
  double iso;
  double f_number;
  double focal_length_mm;
} pisp_camera;

typedef struct pisp_model_options {
  pisp_direction direction;
  pisp_arch arch;
  uint64_t seed;
  int use_paramnet;     /* 0: conditioning vector fixed at zero */
  int normalize_params; /* 0: raw optical magnitudes reach ParamNet */
  /* Optional dataset directories whose training optics set the normalization ranges. */
  const char* const* fit_dirs;
  size_t n_fit_dirs;
} pisp_model_options;

typedef struct pisp_train_options {
  pisp_stage stage;
  const char* const* data_dirs;
  size_t n_data_dirs;
  int epochs;
  double lr;
  uint64_t seed;
  int patch_size;
  int patches_per_camera;
  int batch_size;
  double dropout_p;
  double weight_decay;
  int64_t max_steps;       /* 0: unlimited */
  const char* metrics_csv; /* nullable */
} pisp_train_options;

typedef struct pisp_train_summary {
  int64_t steps;
  int epochs_run;
  int best_epoch; /* -1 without validation data */
  double best_val_l1;
  double final_train_l1;
  double final_val_psnr;
} pisp_train_summary;

typedef struct pisp_synth_options {
  uint64_t camera_seed;
  uint64_t seed;
  int n;
  int size;
  int iso_drift;
  int highlights;
  int noise;
  double val_fraction;
} pisp_synth_options;

typedef struct pisp_gradcheck_entry {
  char name[48];
  double max_rel_error;
} pisp_gradcheck_entry;

PISP_API const char* pisp_version(void);
PISP_API const char* pisp_status_string(pisp_status status);
PISP_API const char* pisp_last_error(void);

PISP_API void pisp_model_options_init(pisp_model_options* opts);
PISP_API void pisp_train_options_init(pisp_train_options* opts);
PISP_API void pisp_synth_options_init(pisp_synth_options* opts);

PISP_API pisp_status pisp_model_create(const pisp_model_options* opts, pisp_model** out);
/* expected may be PISP_ANY_DIRECTION. */
PISP_API pisp_status pisp_model_load(const char* path, pisp_direction expected, pisp_model** out);
PISP_API pisp_status pisp_model_save(const pisp_model* model, const char* path);
PISP_API void pisp_model_free(pisp_model* model);
PISP_API pisp_status pisp_model_direction(const pisp_model* model, pisp_direction* out);
PISP_API pisp_status pisp_model_param_count(const pisp_model* model, int64_t* out);

/* raw: h*w values in [0,1]; rgb: planar 3*h*w values in [0,1]. */
PISP_API pisp_status pisp_raw_to_rgb(const pisp_model* fwd, const float* raw, int64_t width, int64_t height,
                                     const pisp_camera* cam, float* rgb_out);
PISP_API pisp_status pisp_rgb_to_raw(const pisp_model* inv, const float* rgb, int64_t width, int64_t height,
                                     const pisp_camera* cam, float* raw_out);

/* meta may be NULL: the sidecar next to the input (same name, .json) is used. */
PISP_API pisp_status pisp_raw2rgb_file(const pisp_model* fwd, const char* pgm, const char* meta, const char* out_ppm);
/* Also writes the sidecar of the output RAW. */
PISP_API pisp_status pisp_rgb2raw_file(const pisp_model* inv, const char* ppm, const char* meta, const char* out_pgm);
PISP_API pisp_status pisp_hdr_file(const pisp_model* inv, const pisp_model* fwd, const char* ppm, const char* meta,
                                   const double* gains, size_t n_gains, const char* out_ppm);
/* meta_b (target camera) may be NULL to reuse meta_a. */
PISP_API pisp_status pisp_transfer_file(const pisp_model* inv_a, const pisp_model* fwd_b, const char* ppm,
                                        const char* meta_a, const char* meta_b, const char* out_ppm);
PISP_API pisp_status pisp_eval_files(const char* pred_ppm, const char* ref_ppm, double* psnr_out, double* ssim_out);

PISP_API pisp_status pisp_synth(const pisp_synth_options* opts, const char* out_dir);
/* Pretrain/finetune: exactly one of fwd, inv. Joint: both. Weights are updated in place. */
PISP_API pisp_status pisp_train(pisp_model* fwd, pisp_model* inv, const pisp_train_options* opts,
                                pisp_train_summary* summary);

/* Writes up to capacity entries; *count receives the total number. */
PISP_API pisp_status pisp_gradcheck(uint64_t seed, pisp_gradcheck_entry* entries, size_t capacity, size_t* count);

#ifdef __cplusplus
}
#endif

#endif

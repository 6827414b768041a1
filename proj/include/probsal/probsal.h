/* C interface to the probsal library. Every call returns a probsal_status;
 * on failure probsal_last_error() describes the problem (per thread). */
#ifndef PROBSAL_PROBSAL_H
#define PROBSAL_PROBSAL_H

#include <stdint.h>

#if defined(_WIN32)
#define PROBSAL_API __declspec(dllexport)
#else
#define PROBSAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum probsal_status {
  PROBSAL_OK = 0,
  PROBSAL_E_INVALID_ARGUMENT = 1,
  PROBSAL_E_IO = 2,
  PROBSAL_E_FORMAT = 3,
  PROBSAL_E_NUMERIC = 4,
  PROBSAL_E_NOT_FOUND = 5,
  PROBSAL_E_INTERNAL = 6
} probsal_status;

typedef struct probsal_manifest probsal_manifest;
typedef struct probsal_model probsal_model;
typedef struct probsal_report probsal_report;

PROBSAL_API const char* probsal_version(void);
PROBSAL_API const char* probsal_last_error(void);
PROBSAL_API const char* probsal_status_name(probsal_status s);

/* ---- synthetic data and manifests ---- */

typedef struct probsal_synth_params {
  uint64_t seed;
  int count;
  int size;
  int min_objects;
  int max_objects;
  double depth_noise_std;
  int gt_objects;
  int max_holes;
  int first_index;
  int test_split; /* nonzero marks the manifest as a test split */
  const char* id_prefix;
} probsal_synth_params;

PROBSAL_API void probsal_synth_defaults(probsal_synth_params* p);
/* Writes scenes and out_dir/manifest.jsonl. */
PROBSAL_API probsal_status probsal_synth(const probsal_synth_params* p, const char* out_dir);

PROBSAL_API probsal_status probsal_manifest_load(const char* path, probsal_manifest** out);
PROBSAL_API void probsal_manifest_free(probsal_manifest* m);
PROBSAL_API int probsal_manifest_size(const probsal_manifest* m);
/* Borrowed pointer, valid while the manifest lives. */
PROBSAL_API const char* probsal_manifest_id(const probsal_manifest* m, int index);
PROBSAL_API int probsal_manifest_annotation_count(const probsal_manifest* m, int index);

/* oracle: "synthetic", "files:DIR" or "model:CKPT". */
PROBSAL_API probsal_status probsal_augment(const char* manifest_path, const char* oracle, int rounds,
                                           const char* out_manifest);

/* ---- training and checkpoints ---- */

/* Config keys mirror the training configuration; `overrides` holds
 * "key=value" strings applied after the file (config_path may be NULL for
 * the tiny defaults). */
typedef void (*probsal_epoch_callback)(int epoch, double lr, double loss, void* user);

PROBSAL_API probsal_status probsal_config_dump(const char* config_path, const char* const* overrides,
                                               int n_overrides, char* buf, int buf_size);
PROBSAL_API probsal_status probsal_lr_schedule(const char* config_path, const char* const* overrides,
                                               int n_overrides, int epochs, double* out);
PROBSAL_API probsal_status probsal_train(const char* config_path, const char* const* overrides, int n_overrides,
                                         probsal_epoch_callback cb, void* user, probsal_model** out);
PROBSAL_API probsal_status probsal_model_load(const char* path, probsal_model** out);
PROBSAL_API probsal_status probsal_model_save(const probsal_model* m, const char* path);
PROBSAL_API void probsal_model_free(probsal_model* m);
PROBSAL_API int probsal_model_image_size(const probsal_model* m);
PROBSAL_API double probsal_model_final_loss(const probsal_model* m);
/* Recomputes the fixed probe forward; *recorded receives the stored value. */
PROBSAL_API probsal_status probsal_model_probe(const probsal_model* m, double* recomputed, double* recorded);

/* ---- inference ---- */

/* For every entry writes out_dir/{id}_{c}.png (c < samples), the consensus
 * map out_dir/{id}.png and the refined depth out_dir/depth/{id}.png. */
PROBSAL_API probsal_status probsal_sample(const probsal_model* m, const char* manifest_path, int samples,
                                          uint64_t seed, const char* out_dir);
/* Fuses `samples` maps from pred_dir: {id}_{c}.png when id is non-NULL,
 * otherwise the first `samples` PNG files in name order. */
PROBSAL_API probsal_status probsal_consensus_files(const char* pred_dir, const char* id, int samples,
                                                   const char* out_png);

/* ---- evaluation ---- */

PROBSAL_API probsal_status probsal_eval(const char* pred_dir, const char* manifest_path, const char* report_path,
                                        probsal_report** out);
PROBSAL_API probsal_status probsal_report_load(const char* path, probsal_report** out);
PROBSAL_API void probsal_report_free(probsal_report* r);
/* mae, mean F, mean E, S, adaptive F. */
PROBSAL_API probsal_status probsal_report_means(const probsal_report* r, double out[5]);
PROBSAL_API int probsal_report_size(const probsal_report* r);
PROBSAL_API probsal_status probsal_curves(const char* report_path, const char* csv_out, const char* png_out);

/* variant: vae | mhead | mcdropout | no-depthcorr | cvae | K=N. out gets
 * the consensus means (as probsal_report_means) and the mean sample variance. */
PROBSAL_API probsal_status probsal_ablate(const char* config_path, const char* const* overrides, int n_overrides,
                                          const char* variant, const char* test_manifest, int samples,
                                          const char* out_dir, double out[6]);

#ifdef __cplusplus
}
#endif

#endif

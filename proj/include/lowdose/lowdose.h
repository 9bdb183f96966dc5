/*
 * lowdose : contrast dose reduction toolkit
 *
 * Copyright 2026 The lowdose Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface of liblowdose.
 *
 * Every function returns an ld_status. On failure the message of the most
 * recent error on the calling thread is available from ld_last_error() until
 * the next failing call on that thread. Objects returned through out
 * parameters are owned by the caller and released with the matching
 * *_free function; *_free accepts NULL. Out parameters are left untouched on
 * failure.
 */

#ifndef LOWDOSE_H
#define LOWDOSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LD_API __declspec(dllexport)
#else
#define LD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as CLI exit codes. */
typedef enum ld_status {
    LD_OK = 0,
    LD_ERR_INTERNAL = 1,
    LD_ERR_CONFIG = 2,
    LD_ERR_DATA = 3,
    LD_ERR_NUMERIC = 4
} ld_status;

typedef struct ld_volume ld_volume;
typedef struct ld_mask ld_mask;
typedef struct ld_config ld_config;
typedef struct ld_model ld_model;
typedef struct ld_records ld_records;

LD_API const char *ld_version(void);
LD_API const char *ld_last_error(void);

/* ---- configuration (key=value, dotted keys) ---------------------------- */

LD_API ld_status ld_config_new(ld_config **out);
LD_API ld_status ld_config_load(const char *path, ld_config **out);
/* "key=value" */
LD_API ld_status ld_config_set(ld_config *cfg, const char *assignment);
LD_API void ld_config_free(ld_config *cfg);

/* ---- volumes and masks --------------------------------------------------- */

LD_API ld_status ld_volume_read(const char *header_path, ld_volume **out);
LD_API ld_status ld_volume_write(const ld_volume *v, const char *header_path);
/* dims[3] = nx, ny, nz; spacing[3] in mm. Either pointer may be NULL. */
LD_API ld_status ld_volume_geometry(const ld_volume *v, size_t *dims, double *spacing);
/* Copies min(count, nx*ny*nz) voxels, x fastest. */
LD_API ld_status ld_volume_copy_data(const ld_volume *v, float *dst, size_t count);
LD_API ld_status ld_volume_create(const size_t *dims, const double *spacing, const float *data, const char *unit,
                                  ld_volume **out);
/* 16-bit PGM of slice z; lo >= hi selects the slice min/max window. */
LD_API ld_status ld_volume_export_pgm(const ld_volume *v, size_t z, double lo, double hi, const char *path);
LD_API void ld_volume_free(ld_volume *v);

LD_API ld_status ld_mask_read(const char *header_path, ld_mask **out);
LD_API ld_status ld_mask_write(const ld_mask *m, const char *header_path);
LD_API void ld_mask_free(ld_mask *m);

/* ---- phantoms ------------------------------------------------------------ */

/* Writes <out_dir>/<study>/{t1,t1ce,mask}.hdr, truth.csv and split.csv.
 * Reads cohort.phantoms, cohort.seed, cohort.studies_per_patient,
 * phantom.noise_sigma and phantom.texture_amplitude from cfg (may be NULL). */
LD_API ld_status ld_phantom_cohort(const ld_config *cfg, const char *out_dir, int jobs);

/* ---- calibration and simulation ------------------------------------------ */

LD_API ld_status ld_calibrate(const ld_volume *t1, const ld_volume *t1ce, size_t bins, size_t smooth_radius,
                              double *scale, double *offset);
/* bin_center,count_t1,count_t1ce over the common intensity range. */
LD_API ld_status ld_histogram_csv(const ld_volume *t1, const ld_volume *t1ce_calibrated, size_t bins,
                                  const char *path);
LD_API ld_status ld_calibration_write(double scale, double offset, const char *path);
LD_API ld_status ld_calibration_read(const char *path, double *scale, double *offset);
LD_API ld_status ld_apply_calibration(const ld_volume *v, double scale, double offset, ld_volume **out);
/* (1 - beta/100) * t1 + beta/100 * t1ce_calibrated. noise_sigma 0 disables noise. */
LD_API ld_status ld_simulate(const ld_volume *t1, const ld_volume *t1ce_calibrated, int beta_percent,
                             double noise_sigma, uint64_t noise_seed, ld_volume **out);
/* Min-max map to [-1, 1]; lo/hi receive the original range (may be NULL). */
LD_API ld_status ld_normalize(const ld_volume *v, ld_volume **out, double *lo, double *hi);

/* ---- training and restoration --------------------------------------------- */

/* Trains on n (input, target[, aux]) volume triples using the model.* and
 * train.* keys of cfg (may be NULL), then writes the checkpoint and, when
 * history_path is not NULL, the per-step loss history. aux may be NULL. */
LD_API ld_status ld_train(const ld_config *cfg, size_t n, const ld_volume *const *inputs,
                          const ld_volume *const *targets, const ld_volume *const *aux,
                          const char *checkpoint_path, const char *history_path);
LD_API ld_status ld_model_load(const char *checkpoint_path, ld_model **out);
LD_API ld_status ld_model_input_channels(const ld_model *m, int *channels);
LD_API void ld_model_free(ld_model *m);
/* aux is the normalized T1 for two-channel models, else NULL. */
LD_API ld_status ld_restore(const ld_model *m, const ld_volume *low, const ld_volume *aux, size_t patch_rows,
                            size_t patch_cols, double sigma_frac, ld_volume **out);

/* ---- evaluation, statistics and reports ----------------------------------- */

LD_API ld_status ld_records_new(ld_records **out);
LD_API ld_status ld_records_read(const char *metrics_csv, ld_records **out);
LD_API ld_status ld_records_size(const ld_records *r, size_t *n);
/* Evaluates `test` against `reference` on the truth mask and appends the
 * record. arm is "low_dose" or "restored". threshold_frac < 0 and margin NULL
 * select the segmenter defaults. */
LD_API ld_status ld_evaluate(ld_records *r, const char *study_id, int beta_percent, const char *arm,
                             const ld_volume *test, const ld_volume *reference, const ld_mask *truth,
                             size_t split_x, double threshold_frac, const size_t *margin);
LD_API ld_status ld_records_write(const ld_records *r, const char *metrics_csv);
LD_API void ld_records_free(ld_records *r);

LD_API ld_status ld_significance(const char *metrics_csv, const char *significance_csv);
/* Writes table4.csv, fig4.csv and (when svg != 0) fig4.svg into out_dir. */
LD_API ld_status ld_report(const char *metrics_csv, const char *significance_csv, const char *out_dir, int svg);

/* Full pipeline driven by cfg; outputs land in paths.work_dir. progress may
 * be NULL and is called with one line per stage. */
typedef void (*ld_progress_fn)(const char *message, void *user);
LD_API ld_status ld_run(const ld_config *cfg, int jobs, ld_progress_fn progress, void *user);

/* Split-x column of <cohort_dir>/truth.csv for one study. */
LD_API ld_status ld_cohort_split_x(const char *cohort_dir, const char *study_id, size_t *split_x);

#ifdef __cplusplus
}
#endif

#endif /* LOWDOSE_H */

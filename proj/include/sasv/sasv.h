/*
 * Copyright 2026 The sasv-ensemble Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *  http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SASV_SASV_H_
#define SASV_SASV_H_

/*
 * C interface to the spoofing-aware speaker verification backends.
 *
 * Every function returns a sasv_status. On failure the message is available
 * from sasv_last_error() on the same thread until the next call. Objects are
 * opaque handles released with their *_free function; strings returned
 * through char** are released with sasv_string_free. Output pointers are
 * written only on success.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(SASV_BUILDING_LIBRARY)
#define SASV_API __attribute__((visibility("default")))
#else
#define SASV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sasv_status {
  SASV_OK = 0,
  SASV_ERR_INVALID_ARGUMENT = 1,
  SASV_ERR_DIMENSION = 2,
  SASV_ERR_PARSE = 3,
  SASV_ERR_IO = 4,
  SASV_ERR_DATA = 5,
  SASV_ERR_NUMERIC = 6,
  SASV_ERR_INTERNAL = 7
} sasv_status;

typedef enum sasv_metric {
  SASV_METRIC_SASV = 0, /* target vs nontarget + spoof */
  SASV_METRIC_SPF = 1,  /* target vs spoof */
  SASV_METRIC_SV = 2    /* target vs nontarget */
} sasv_metric;

typedef enum sasv_report_format {
  SASV_REPORT_TABLE = 0,
  SASV_REPORT_JSON = 1,
  SASV_REPORT_TRIPLE = 2 /* "SASV SPF SV" with 3 decimals */
} sasv_report_format;

typedef struct sasv_store sasv_store;
typedef struct sasv_protocol sasv_protocol;
typedef struct sasv_model sasv_model;
typedef struct sasv_scores sasv_scores;
typedef struct sasv_report sasv_report;
typedef struct sasv_fusion sasv_fusion;

SASV_API const char* sasv_version(void);
SASV_API const char* sasv_last_error(void);
/* Short lowercase name of a status ("ok", "invalid-argument", ...). */
SASV_API const char* sasv_status_string(sasv_status status);
SASV_API void sasv_string_free(char* str);

/* ---- data ---------------------------------------------------------- */

/* Writes embeddings.txt, train.txt, dev.txt, eval.txt and synth.cfg to
 * out_dir. config_path may be NULL for defaults; overrides are "key=value"
 * strings applied after the file. */
SASV_API sasv_status sasv_generate_synthetic(const char* config_path,
                                             const char* const* overrides,
                                             size_t num_overrides, const char* out_dir);

SASV_API sasv_status sasv_store_load(const char* path, sasv_store** out);
SASV_API void sasv_store_free(sasv_store* store);
SASV_API sasv_status sasv_store_dims(const sasv_store* store, size_t* d_spk, size_t* d_cm);

SASV_API sasv_status sasv_protocol_load(const char* path, sasv_protocol** out);
SASV_API void sasv_protocol_free(sasv_protocol* protocol);
SASV_API sasv_status sasv_protocol_size(const sasv_protocol* protocol, size_t* out);

/* ---- models -------------------------------------------------------- */

/* Number of presets and their names (static strings). */
SASV_API size_t sasv_preset_count(void);
SASV_API const char* sasv_preset_name(size_t index);

SASV_API sasv_status sasv_model_build(const char* preset, size_t d_spk, size_t d_cm,
                                      uint64_t seed, sasv_model** out);
SASV_API sasv_status sasv_model_load(const char* path, sasv_model** out);
SASV_API sasv_status sasv_model_save(const sasv_model* model, const char* path);
SASV_API void sasv_model_free(sasv_model* model);
SASV_API sasv_status sasv_model_num_parameters(const sasv_model* model, size_t* out);
SASV_API sasv_status sasv_model_config_json(const sasv_model* model, char** out);
SASV_API sasv_status sasv_model_digest(const sasv_model* model, char** out);

/* Called once per epoch with a one-line JSON record. */
typedef void (*sasv_epoch_callback)(const char* record_json, void* user);

/* Runs a key=value run file. Relative paths resolve against workdir (may be
 * NULL). summary_json (may be NULL) receives the run summary. */
SASV_API sasv_status sasv_experiment_train(const char* run_file, const char* workdir,
                                           sasv_epoch_callback on_epoch, void* user,
                                           char** summary_json);

/* ---- scores -------------------------------------------------------- */

/* Scores every trial of the protocol; the result carries its labels. */
SASV_API sasv_status sasv_model_score(const sasv_model* model, const sasv_store* store,
                                      const sasv_protocol* protocol, sasv_scores** out);

/* protocol may be NULL; when given, labels are attached and coverage is
 * checked. */
SASV_API sasv_status sasv_scores_load(const char* path, const sasv_protocol* protocol,
                                      sasv_scores** out);
SASV_API sasv_status sasv_scores_attach_labels(sasv_scores* scores, const sasv_protocol* protocol);
SASV_API sasv_status sasv_scores_save(const sasv_scores* scores, const char* path);
SASV_API void sasv_scores_free(sasv_scores* scores);
SASV_API sasv_status sasv_scores_size(const sasv_scores* scores, size_t* out);
/* trial_id stays valid while the handle lives. */
SASV_API sasv_status sasv_scores_get(const sasv_scores* scores, size_t index,
                                     const char** trial_id, double* score);

/* ---- metrics ------------------------------------------------------- */

/* Requires labelled scores. */
SASV_API sasv_status sasv_evaluate(const sasv_scores* scores, sasv_report** out);
SASV_API void sasv_report_free(sasv_report* report);
/* SASV_ERR_DATA when the metric lacks positives or negatives. */
SASV_API sasv_status sasv_report_eer(const sasv_report* report, sasv_metric metric,
                                     double* eer_percent, double* threshold);
SASV_API sasv_status sasv_report_text(const sasv_report* report, sasv_report_format format,
                                      char** out);

/* Writes "threshold far frr" rows for one metric. */
SASV_API sasv_status sasv_det_points_write(const sasv_scores* scores, sasv_metric metric,
                                           const char* path);

/* ---- score fusion -------------------------------------------------- */

SASV_API sasv_status sasv_fusion_average(const sasv_scores* const* systems, size_t count,
                                         sasv_scores** out);
/* Fits weights on labelled calibration scores (one set per system). */
SASV_API sasv_status sasv_fusion_fit_linear(const sasv_scores* const* calibration, size_t count,
                                            sasv_fusion** out);
SASV_API sasv_status sasv_fusion_make_average(sasv_fusion** out);
SASV_API sasv_status sasv_fusion_apply(const sasv_fusion* fusion,
                                       const sasv_scores* const* systems, size_t count,
                                       sasv_scores** out);
SASV_API sasv_status sasv_fusion_save(const sasv_fusion* fusion, const char* path);
SASV_API sasv_status sasv_fusion_load(const char* path, sasv_fusion** out);
SASV_API sasv_status sasv_fusion_json(const sasv_fusion* fusion, char** out);
SASV_API void sasv_fusion_free(sasv_fusion* fusion);

/* ---- self test ----------------------------------------------------- */

typedef void (*sasv_check_callback)(const char* name, int passed, const char* detail, void* user);

/* Runs the built-in checks. Returns SASV_OK even when checks fail; inspect
 * the counts. */
SASV_API sasv_status sasv_selftest(sasv_check_callback on_check, void* user, size_t* passed,
                                   size_t* failed);

#ifdef __cplusplus
}
#endif

#endif /* SASV_SASV_H_ */

/*
 * tplrecon C API.
 *
 * Every object is an opaque handle created by a tpr_*_new / tpr_*_load /
 * tpr_*_run call and released with the matching tpr_*_free. Functions return
 * a tpr_status; on failure tpr_last_error() describes the error for the
 * calling thread. Strings returned through char** are owned by the caller
 * and released with tpr_string_free.
 */
#ifndef TPLRECON_TPLRECON_H_
#define TPLRECON_TPLRECON_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef TPLRECON_BUILDING
#    define TPR_API __declspec(dllexport)
#  else
#    define TPR_API __declspec(dllimport)
#  endif
#elif defined(__GNUC__) || defined(__clang__)
#  define TPR_API __attribute__((visibility("default")))
#else
#  define TPR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tpr_status {
  TPR_OK = 0,
  TPR_E_INVALID_ARGUMENT = 1,
  TPR_E_DEGENERATE_TEMPLATE = 2,
  TPR_E_DIM_MISMATCH = 3,
  TPR_E_BAD_MAGIC = 4,
  TPR_E_LENGTH_MISMATCH = 5,
  TPR_E_NON_FINITE = 6,
  TPR_E_IO = 7,
  TPR_E_SINGULAR = 8,
  TPR_E_UNKNOWN_IDENTITY = 9,
  TPR_E_LOCKED_OUT = 10,
  TPR_E_NO_FALSE_MATCH = 11,
  TPR_E_OUTSIDE_POINT_NOT_FOUND = 12,
  TPR_E_WRONG_MODE = 13,
  TPR_E_NETWORK = 14,
  TPR_E_PROTOCOL = 15,
  TPR_E_PARSE = 16,
  TPR_E_INTERNAL = 17
} tpr_status;

typedef enum tpr_metric { TPR_METRIC_SED = 0, TPR_METRIC_COSINE = 1 } tpr_metric;
typedef enum tpr_mode { TPR_MODE_SCORE = 0, TPR_MODE_BINARY = 1 } tpr_mode;
typedef enum tpr_report_format { TPR_FORMAT_CSV = 0, TPR_FORMAT_JSON = 1 } tpr_report_format;

typedef struct tpr_template tpr_template;
typedef struct tpr_model tpr_model;
typedef struct tpr_oracle tpr_oracle;
typedef struct tpr_result tpr_result;
typedef struct tpr_report tpr_report;
typedef struct tpr_server tpr_server;

TPR_API const char* tpr_version(void);
TPR_API const char* tpr_last_error(void);
TPR_API const char* tpr_status_name(tpr_status status);
TPR_API void tpr_string_free(char* s);

/* ---- templates ---------------------------------------------------------- */

TPR_API tpr_status tpr_template_new(const double* values, size_t dim, int unit_norm,
                                    tpr_template** out);
TPR_API void tpr_template_free(tpr_template* t);
TPR_API size_t tpr_template_dim(const tpr_template* t);
TPR_API int tpr_template_is_unit(const tpr_template* t);
/* Copies min(dim, capacity) values; returns the template dim. */
TPR_API size_t tpr_template_values(const tpr_template* t, double* out, size_t capacity);
TPR_API tpr_status tpr_template_read(const char* path, tpr_template** out);
TPR_API tpr_status tpr_template_write(const tpr_template* t, const char* path);
TPR_API tpr_status tpr_template_to_json(const tpr_template* t, char** out_json);
TPR_API tpr_status tpr_template_normalize(const tpr_template* t, tpr_template** out);

TPR_API tpr_status tpr_reconstruction_loss(const tpr_template* recovered,
                                           const tpr_template* truth, tpr_metric metric,
                                           double* out_loss);

/* ---- identity model ----------------------------------------------------- */

typedef struct tpr_model_params {
  size_t dim;
  size_t identities;
  double sigma_w;
  double conc;
  uint64_t seed;
} tpr_model_params;

TPR_API void tpr_model_params_default(tpr_model_params* params);
TPR_API tpr_status tpr_model_generate(const tpr_model_params* params, tpr_model** out);
TPR_API tpr_status tpr_model_save(const tpr_model* m, const char* dir);
TPR_API tpr_status tpr_model_load(const char* dir, tpr_model** out);
TPR_API tpr_status tpr_model_params_get(const tpr_model* m, tpr_model_params* out);
TPR_API void tpr_model_free(tpr_model* m);
TPR_API tpr_status tpr_model_sample(const tpr_model* m, size_t identity, int unit_norm,
                                    uint64_t seed, tpr_template** out);
/* Enrollment sample used by servers and experiments for `identity`. */
TPR_API tpr_status tpr_model_enrollment(const tpr_model* m, size_t identity, tpr_metric metric,
                                        uint64_t enroll_seed, tpr_template** out);

typedef struct tpr_calibration {
  double threshold;
  double achieved_fmr;
  uint64_t sample_size;
} tpr_calibration;

TPR_API tpr_status tpr_calibrate(const tpr_model* m, tpr_metric metric, double target_fmr,
                                 size_t pairs, uint64_t seed, tpr_calibration* out);
/* Measured FMR of `threshold` on `pairs` fresh impostor pairs. */
TPR_API tpr_status tpr_measure_fmr(const tpr_model* m, tpr_metric metric, double threshold,
                                   size_t pairs, uint64_t seed, double* out_fmr);

/* ---- oracles ------------------------------------------------------------ */

typedef struct tpr_oracle_config {
  tpr_metric metric;
  tpr_mode mode;
  double threshold;     /* required in binary mode */
  int has_threshold;
  double sigma;         /* score noise std-dev */
  uint64_t query_limit; /* 0 = unlimited */
  uint64_t noise_seed;
} tpr_oracle_config;

TPR_API tpr_status tpr_oracle_new_local(const tpr_oracle_config* config, tpr_oracle** out);
TPR_API tpr_status tpr_oracle_connect(const char* address, tpr_mode mode, tpr_oracle** out);
TPR_API void tpr_oracle_free(tpr_oracle* o);
TPR_API tpr_status tpr_oracle_enroll(tpr_oracle* o, const char* claim, const tpr_template* t);
TPR_API tpr_status tpr_oracle_auth_score(tpr_oracle* o, const char* claim,
                                         const tpr_template* probe, double* out_score);
TPR_API tpr_status tpr_oracle_auth_binary(tpr_oracle* o, const char* claim,
                                          const tpr_template* probe, int* out_match);
TPR_API tpr_status tpr_oracle_queries(const tpr_oracle* o, uint64_t* out);

/* ---- attacks ------------------------------------------------------------ */

/*
 * attack_json: {"attack": "score-sed|score-cos|hill|binary-baseline|binary-ours",
 *   "dim": n, "seed": s, "step_size": 0.07, "budget": 4000, "precision": 20,
 *   "threshold_estimate": T, "exclude_identity": id, "breaking_set_size": k,
 *   "breaking_set_seed": s, "unit": bool}
 * Binary attacks draw their breaking set from `model` (required for them).
 */
TPR_API tpr_status tpr_attack_run(tpr_oracle* o, const char* claim, const char* attack_json,
                                  const tpr_model* model, tpr_result** out);
TPR_API void tpr_result_free(tpr_result* r);
TPR_API tpr_status tpr_result_recovered(const tpr_result* r, tpr_template** out);
TPR_API uint64_t tpr_result_queries(const tpr_result* r);
TPR_API uint64_t tpr_result_seed_queries(const tpr_result* r);
TPR_API double tpr_result_seconds(const tpr_result* r);
TPR_API tpr_status tpr_result_to_json(const tpr_result* r, char** out_json);

/* ---- experiments and reports -------------------------------------------- */

TPR_API tpr_status tpr_experiment_run(const char* config_json, tpr_report** out);
TPR_API void tpr_report_free(tpr_report* r);
TPR_API tpr_status tpr_report_write(const tpr_report* r, tpr_report_format format,
                                    const char* path);
TPR_API tpr_status tpr_report_write_convergence(const tpr_report* r, const char* path);
TPR_API tpr_status tpr_report_load(const char* path, tpr_report** out);
TPR_API tpr_status tpr_report_summary(const tpr_report* r, char** out_text);
TPR_API size_t tpr_report_rows(const tpr_report* r);
TPR_API size_t tpr_report_failed_rows(const tpr_report* r);

/* ---- network oracle server ---------------------------------------------- */

/* config_json: {metric, mode, threshold | fmr, sigma, query_limit,
 *   model_manifest, bind, open_enrollment, enroll_seed, noise_seed} */
TPR_API tpr_status tpr_server_start(const char* config_json, tpr_server** out);
TPR_API uint16_t tpr_server_port(const tpr_server* s);
TPR_API void tpr_server_wait(tpr_server* s);
TPR_API void tpr_server_stop(tpr_server* s);
TPR_API void tpr_server_free(tpr_server* s);

#ifdef __cplusplus
}
#endif

#endif /* TPLRECON_TPLRECON_H_ */

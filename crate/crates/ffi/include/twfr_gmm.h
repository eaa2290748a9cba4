#ifndef TWFR_GMM_H
#define TWFR_GMM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by all fallible entry points.
 */
typedef enum TwfrGmmStatus {
  TwfrGmmStatus_Ok = 0,
  TwfrGmmStatus_NullPointer = 1,
  TwfrGmmStatus_InvalidUtf8 = 2,
  TwfrGmmStatus_LoadFailed = 3,
  TwfrGmmStatus_ScoreFailed = 4,
  TwfrGmmStatus_InvalidArgument = 5,
} TwfrGmmStatus;

/**
 * Opaque handle to a loaded model bundle.
 */
typedef struct TwfrGmmModel TwfrGmmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a model bundle (JSON produced by the `fit` command) from `path`.
 * On success writes a handle to `out_model`; release it with
 * `twfr_gmm_model_free`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out_model` a valid
 * pointer.
 */
enum TwfrGmmStatus twfr_gmm_model_load(const char *path, struct TwfrGmmModel **out_model);

/**
 * Release a handle returned by `twfr_gmm_model_load`. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a pointer from `twfr_gmm_model_load`, freed once.
 */
void twfr_gmm_model_free(struct TwfrGmmModel *model);

/**
 * Number of detection-stage parameters in the model (0 for null).
 *
 * # Safety
 * `model` must be null or a valid handle.
 */
uintptr_t twfr_gmm_model_parameter_count(const struct TwfrGmmModel *model);

/**
 * The pooling exponent the model was fitted with (NaN for null).
 *
 * # Safety
 * `model` must be null or a valid handle.
 */
double twfr_gmm_model_r(const struct TwfrGmmModel *model);

/**
 * Anomaly-score a mono sample buffer (amplitudes in [-1, 1]) at the given
 * sample rate. Higher scores are more anomalous.
 *
 * # Safety
 * `samples` must point to `len` readable f64 values; `out_score` must be a
 * valid pointer.
 */
enum TwfrGmmStatus twfr_gmm_score_samples(const struct TwfrGmmModel *model,
                                          const double *samples,
                                          uintptr_t len,
                                          uint32_t sample_rate,
                                          double *out_score);

/**
 * Anomaly-score a WAV file on disk.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out_score` a valid pointer.
 */
enum TwfrGmmStatus twfr_gmm_score_wav(const struct TwfrGmmModel *model,
                                      const char *path,
                                      double *out_score);

/**
 * Copy the last error message for this thread into `buf` (NUL-terminated,
 * truncated to `cap`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null to query the length.
 */
uintptr_t twfr_gmm_last_error(char *buf, uintptr_t cap);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TWFR_GMM_H */

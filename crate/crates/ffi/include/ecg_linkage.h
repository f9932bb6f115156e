#ifndef ECG_LINKAGE_H
#define ECG_LINKAGE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum ElkStatus {
  ELK_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  ELK_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Bad parameter or configuration value.
   */
  ELK_STATUS_PARAMETER = 2,
  /**
   * Malformed input data, including length mismatches.
   */
  ELK_STATUS_INPUT = 3,
  ELK_STATUS_NUMERICAL = 4,
  ELK_STATUS_CALIBRATION = 5,
  ELK_STATUS_METRIC = 6,
  ELK_STATUS_CHECKPOINT = 7,
  /**
   * A run bundle failed hash verification.
   */
  ELK_STATUS_INTEGRITY = 8,
  ELK_STATUS_IO = 9,
  /**
   * The caller's output buffer is too small.
   */
  ELK_STATUS_BUFFER_TOO_SMALL = 10,
  /**
   * A bug inside the library; the message has details.
   */
  ELK_STATUS_INTERNAL = 11,
} ElkStatus;

/**
 * A loaded classifier.
 */
typedef struct ElkModel ElkModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. The pointer stays valid until the next call on the thread.
 */
const char *elk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *elk_version(void);

/**
 * Loads a checkpoint file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum ElkStatus elk_model_load(const char *path_, struct ElkModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`elk_model_load`] and not be used afterwards.
 */
void elk_model_free(struct ElkModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ElkStatus elk_model_num_classes(const struct ElkModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum ElkStatus elk_model_window_len(const struct ElkModel *model, size_t *out);

/**
 * Writes the class logits of one normalized window into `logits`, which
 * must hold `num_classes` values.
 *
 * # Safety
 * `window` must point to `window_len` values and `logits` to `logits_len`.
 */
enum ElkStatus elk_model_logits(const struct ElkModel *model,
                                const double *window,
                                size_t window_len,
                                double *logits,
                                size_t logits_len);

/**
 * Stage 1: predicted class and its softmax confidence.
 *
 * # Safety
 * `logits` must point to `n` values; the outputs must be valid pointers.
 */
enum ElkStatus elk_stage1_match(const double *logits, size_t n, size_t *label, double *tau);

/**
 * Nearest-rank percentile `p` of the calibration confidences.
 *
 * # Safety
 * `confidences` must point to `n` values and `phi` be a valid pointer.
 */
enum ElkStatus elk_calibrate_percentile(const double *confidences, size_t n, double p, double *phi);

/**
 * Stage 2: 1 when the window is rejected as unknown, 0 when the Stage-1
 * label is kept.
 */
int32_t elk_stage2_is_unknown(double tau, double phi);

/**
 * Equal error rate of genuine versus impostor scores, with the threshold
 * that attains it (possibly infinite).
 *
 * # Safety
 * Score arrays must hold the stated counts; outputs must be valid.
 */
enum ElkStatus elk_eer(const double *genuine,
                       size_t n_genuine,
                       const double *impostor,
                       size_t n_impostor,
                       double *eer,
                       double *threshold);

/**
 * Min-max normalizes `n` values into `out`. `*flat` is set to 1 when the
 * input is constant (the output is then all zeros).
 *
 * # Safety
 * `values` and `out` must each point to `n` values; `flat` may be null.
 */
enum ElkStatus elk_normalize(const double *values, size_t n, double *out, int32_t *flat);

/**
 * Resamples a signal from `from_hz` to `to_hz`. Call once with a null
 * `out` to learn the output length through `out_len`, then again with a
 * buffer of that size.
 *
 * # Safety
 * `values` must point to `n` values, `out` to `*out_len` values or be null.
 */
enum ElkStatus elk_resample(const double *values,
                            size_t n,
                            double from_hz,
                            double to_hz,
                            double *out,
                            size_t *out_len);

/**
 * Verifies a run bundle directory. On success the 64-character content
 * hash plus a NUL is written to `hash` when it is non-null.
 *
 * # Safety
 * `dir` must be NUL-terminated; `hash` must hold `hash_len` bytes.
 */
enum ElkStatus elk_bundle_verify(const char *dir, char *hash, size_t hash_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECG_LINKAGE_H */

#ifndef SVDSIM_H
#define SVDSIM_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes. Zero is success.
 */
typedef enum SvdsimStatus {
  SVDSIM_OK = 0,
  SVDSIM_NULL_POINTER = 1,
  SVDSIM_INVALID_ARGUMENT = 2,
  SVDSIM_IO = 3,
  SVDSIM_FORMAT = 4,
  SVDSIM_NUMERIC = 5,
  SVDSIM_SHAPE = 6,
  SVDSIM_RESOLUTION = 7,
  SVDSIM_EMPTY_RETENTION = 8,
  SVDSIM_BUFFER_TOO_SMALL = 9,
  SVDSIM_OTHER = 10,
  SVDSIM_PANIC = 11,
} SvdsimStatus;

/**
 * Dense real matrix with row norms and Frobenius norm precomputed.
 */
typedef struct SvdsimMatrix SvdsimMatrix;

/**
 * Thin SVD of a matrix.
 */
typedef struct SvdsimModel SvdsimModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success. The
 * pointer stays valid until the next svdsim call on the same thread.
 */
const char *svdsim_last_error(void);

/**
 * Builds an `n x m` matrix from row-major `data` of length `n * m`.
 *
 * # Safety
 * `data` must point to `n * m` readable doubles and `out` must be writable.
 */
enum SvdsimStatus svdsim_matrix_from_rows(const double *data,
                                          size_t n,
                                          size_t m,
                                          struct SvdsimMatrix **out);

/**
 * Loads a numeric CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SvdsimStatus svdsim_matrix_load_csv(const char *path,
                                         bool has_header,
                                         struct SvdsimMatrix **out);

/**
 * # Safety
 * `m` must come from this library and not be used afterwards. Null is a no-op.
 */
void svdsim_matrix_free(struct SvdsimMatrix *m);

/**
 * # Safety
 * `m` must be a live handle; `rows` and `cols` writable.
 */
enum SvdsimStatus svdsim_matrix_shape(const struct SvdsimMatrix *m, size_t *rows, size_t *cols);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_matrix_frobenius(const struct SvdsimMatrix *m, double *out);

/**
 * Column centering and/or division by the largest singular value, into a
 * new handle.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_matrix_preprocess(const struct SvdsimMatrix *m,
                                           bool center,
                                           bool spectral_normalize,
                                           struct SvdsimMatrix **out);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_svd(const struct SvdsimMatrix *m, struct SvdsimModel **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is a no-op.
 */
void svdsim_model_free(struct SvdsimModel *s);

/**
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_model_rank(const struct SvdsimModel *s, size_t *out);

/**
 * Copies the singular values (descending) into `buf`. `written` receives
 * the rank; if `cap` is smaller the call fails with
 * `SVDSIM_BUFFER_TOO_SMALL` and nothing is copied.
 *
 * # Safety
 * `buf` must have room for `cap` doubles (may be null when `cap` is 0).
 */
enum SvdsimStatus svdsim_model_sigmas(const struct SvdsimModel *s,
                                      double *buf,
                                      size_t cap,
                                      size_t *written);

/**
 * Number of singular values at least `theta`, no rounding.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_count_retained_exact(const struct SvdsimModel *s,
                                              double theta,
                                              size_t *out);

/**
 * Sum of the factor score ratios of singular values at least `theta`.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum SvdsimStatus svdsim_check_fsr_sum_exact(const struct SvdsimModel *s,
                                             double theta,
                                             double *out);

/**
 * Threshold search with exact probes. `found` is false when no grid
 * threshold reaches `p` within `eta`; `theta` is then left at 0.
 *
 * # Safety
 * `s` must be a live handle; the output pointers writable.
 */
enum SvdsimStatus svdsim_binary_search(const struct SvdsimModel *s,
                                       double p,
                                       double eps,
                                       double eta,
                                       bool *found,
                                       double *theta,
                                       uint32_t *iterations);

/**
 * Measurements needed to see every retained singular vector, averaged
 * over `trials` seeded runs.
 *
 * # Safety
 * `s` must be a live handle; the output pointers writable.
 */
enum SvdsimStatus svdsim_coupon(const struct SvdsimModel *s,
                                double theta,
                                double eps,
                                size_t trials,
                                uint64_t seed,
                                double *mean,
                                double *std,
                                double *benchmark);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SVDSIM_H */

#ifndef HYBAGG_H
#define HYBAGG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HybaggStatus {
  HYBAGG_STATUS_OK = 0,
  HYBAGG_STATUS_NULL_POINTER = 1,
  HYBAGG_STATUS_INVALID_ARGUMENT = 2,
  HYBAGG_STATUS_PROTOCOL = 3,
  HYBAGG_STATUS_WIRE = 4,
  HYBAGG_STATUS_BUFFER_TOO_SMALL = 5,
  HYBAGG_STATUS_PANIC = 99,
} HybaggStatus;

/**
 * A simulated cohort: the public directory plus every client's keyring.
 */
typedef struct HybaggCohort HybaggCohort;

/**
 * Selected parameters.
 */
typedef struct HybaggParams HybaggParams;

/**
 * Rust-allocated bytes; release with [`hybagg_bytes_free`].
 */
typedef struct HybaggBytes {
  uint8_t *data;
  size_t len;
} HybaggBytes;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length, or 0 when none.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t hybagg_last_error(char *buf, size_t cap);

/**
 * Static description of a status code.
 */
const char *hybagg_status_str(enum HybaggStatus status);

/**
 * Selects the smallest secure ring for dimension `d`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HybaggStatus hybagg_params_select(size_t d,
                                       size_t max_cohort,
                                       uint32_t delta_bits,
                                       uint32_t smudge_bits,
                                       double value_bound,
                                       struct HybaggParams **out);

/**
 * # Safety
 * `params` must be null or a handle from [`hybagg_params_select`] not yet freed.
 */
void hybagg_params_free(struct HybaggParams *params);

/**
 * Ring degree `n`, or 0 for a null handle.
 *
 * # Safety
 * `params` must be null or a live handle.
 */
size_t hybagg_params_ring_degree(const struct HybaggParams *params);

/**
 * Serialized size of one client upload, or 0 for a null handle.
 *
 * # Safety
 * `params` must be null or a live handle.
 */
size_t hybagg_params_upload_size(const struct HybaggParams *params);

/**
 * Runs setup for `clients` clients from a 64-bit seed.
 *
 * # Safety
 * `params` must be a live handle and `out` valid for one write.
 */
enum HybaggStatus hybagg_cohort_setup(const struct HybaggParams *params,
                                      size_t clients,
                                      uint64_t seed,
                                      struct HybaggCohort **out);

/**
 * # Safety
 * `cohort` must be null or a handle from [`hybagg_cohort_setup`] not yet freed.
 */
void hybagg_cohort_free(struct HybaggCohort *cohort);

/**
 * Serialized public directory.
 *
 * # Safety
 * `cohort` must be a live handle and `out` valid for one write.
 */
enum HybaggStatus hybagg_cohort_directory(const struct HybaggCohort *cohort,
                                          struct HybaggBytes *out);

/**
 * Encodes, encrypts, and masks `x[0..len]` for client `id`, writing the
 * serialized upload to `out`.
 *
 * # Safety
 * `cohort` must be a live handle, `x` must point to `len` doubles, and
 * `out` must be valid for one write.
 */
enum HybaggStatus hybagg_client_round(const struct HybaggCohort *cohort,
                                      uint32_t id,
                                      const double *x,
                                      size_t len,
                                      uint32_t round,
                                      struct HybaggBytes *out);

/**
 * Parses `count` serialized uploads and writes the decoded sum to
 * `sum[0..sum_len]`; `sum_len` must equal the configured dimension.
 *
 * # Safety
 * `uploads` must point to `count` buffers, each valid for its `len` bytes,
 * and `sum` must point to `sum_len` writable doubles.
 */
enum HybaggStatus hybagg_server_aggregate(const struct HybaggCohort *cohort,
                                          const struct HybaggBytes *uploads,
                                          size_t count,
                                          double *sum,
                                          size_t sum_len);

/**
 * # Safety
 * `bytes` must have come from this library and not been freed.
 */
void hybagg_bytes_free(struct HybaggBytes bytes);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYBAGG_H */

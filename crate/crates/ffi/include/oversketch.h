#ifndef OVERSKETCH_H
#define OVERSKETCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OsStatus {
  OS_STATUS_OK = 0,
  OS_STATUS_NULL_POINTER = 1,
  OS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A worker's inputs do not fit in its memory.
   */
  OS_STATUS_MEMORY = 3,
  /**
   * Too few results arrived to form the product.
   */
  OS_STATUS_STRAGGLERS = 4,
  /**
   * The coded scheme could not decode the lost blocks.
   */
  OS_STATUS_RECOVERY = 5,
  /**
   * Relative error of an all-zero reference.
   */
  OS_STATUS_UNDEFINED = 6,
  OS_STATUS_INTERNAL = 7,
  OS_STATUS_PANIC = 8,
} OsStatus;

typedef enum OsScheme {
  OS_SCHEME_NAIVE = 0,
  OS_SCHEME_BLOCKED = 1,
  OS_SCHEME_OVERSKETCH = 2,
  OS_SCHEME_CODED_NAIVE = 3,
} OsScheme;

/**
 * Opaque matrix handle.
 */
typedef struct OsMatrix OsMatrix;

/**
 * Multiplication settings. `block` is the chunk width for the naive and
 * coded schemes; `n_keep` and `e` only apply to OverSketch.
 */
typedef struct OsMultiplyOptions {
  enum OsScheme scheme;
  size_t block;
  size_t n_keep;
  size_t e;
  uint64_t seed;
} OsMultiplyOptions;

/**
 * Simulated resource use of one run, or a cost-model prediction.
 */
typedef struct OsRunStats {
  uint64_t workers;
  /**
   * Summed worker seconds.
   */
  double compute_time;
  /**
   * Wave makespans plus invocation overhead; 0 for predictions.
   */
  double wall_clock;
  double dollars;
} OsRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *os_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *os_version(void);

/**
 * New `rows × cols` matrix copied from `data` (row-major, `rows · cols`
 * values), or zeros when `data` is null.
 *
 * # Safety
 * `data` must be null or point to `rows · cols` doubles; `out` must be
 * writable.
 */
enum OsStatus os_matrix_new(size_t rows, size_t cols, const double *data, struct OsMatrix **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void os_matrix_free(struct OsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t os_matrix_rows(const struct OsMatrix *m);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
size_t os_matrix_cols(const struct OsMatrix *m);

/**
 * Copies the entries row-major into `out`, which holds `len` doubles.
 *
 * # Safety
 * `m` must be a live handle and `out` must point to `len` doubles.
 */
enum OsStatus os_matrix_copy_data(const struct OsMatrix *m, double *out, size_t len);

/**
 * `‖exact − approx‖_F / ‖exact‖_F`.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum OsStatus os_frobenius_error(const struct OsMatrix *exact,
                                 const struct OsMatrix *approx,
                                 double *out);

/**
 * Multiplies `a · b` on the simulated platform with the default straggler
 * model seeded from `opts.seed`. On success `*product` receives a new
 * handle; `stats` may be null.
 *
 * # Safety
 * `a`, `b` must be live handles, `opts` and `product` valid pointers,
 * `stats` null or writable.
 */
enum OsStatus os_multiply(const struct OsMatrix *a,
                          const struct OsMatrix *b,
                          const struct OsMultiplyOptions *opts,
                          struct OsMatrix **product,
                          struct OsRunStats *stats);

/**
 * Cost-model prediction for an `m × n` by `n × l` product. `memory` of 0
 * keeps the default worker memory; `block` of 0 lets the naive, blocked
 * and coded schemes size their chunks from memory.
 *
 * # Safety
 * `opts` and `out` must be valid pointers.
 */
enum OsStatus os_predict_cost(size_t m,
                              size_t n,
                              size_t l,
                              const struct OsMultiplyOptions *opts,
                              uint64_t memory,
                              struct OsRunStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OVERSKETCH_H */

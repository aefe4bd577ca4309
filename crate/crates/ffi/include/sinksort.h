#ifndef SINKSORT_H
#define SINKSORT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SinksortStatus {
  SINKSORT_STATUS_OK = 0,
  SINKSORT_STATUS_INVALID_ARGUMENT = 1,
  SINKSORT_STATUS_NULL_POINTER = 2,
  /**
   * Batch is empty or dimensions are zero.
   */
  SINKSORT_STATUS_SHAPE = 3,
  SINKSORT_STATUS_NOT_CONVERGED = 4,
  SINKSORT_STATUS_NUMERICAL = 5,
  SINKSORT_STATUS_PANIC = 6,
} SinksortStatus;

typedef enum SinksortSquash {
  SINKSORT_SQUASH_LOGISTIC = 0,
  SINKSORT_SQUASH_ARCTAN = 1,
} SinksortSquash;

typedef enum SinksortMode {
  SINKSORT_MODE_LOG_DOMAIN = 0,
  SINKSORT_MODE_MULTIPLICATIVE = 1,
} SinksortMode;

/**
 * Row-major `rows x cols` block of doubles owned by the library.
 */
typedef struct SinksortArray SinksortArray;

/**
 * Solver options. Create with [`sinksort_options_new`].
 */
typedef struct SinksortOptions SinksortOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sinksort_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into the library from this thread.
 */
const char *sinksort_last_error(void);

/**
 * Options with library defaults (`epsilon = 1e-2`, `eta = 1e-3`,
 * `max_iters = 5000`, squared cost, logistic squash, log domain).
 */
struct SinksortOptions *sinksort_options_new(void);

/**
 * # Safety
 * `opts` must be null or come from [`sinksort_options_new`], freed once.
 */
void sinksort_options_free(struct SinksortOptions *opts);

/**
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_epsilon(struct SinksortOptions *opts, double value);

/**
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_eta(struct SinksortOptions *opts, double value);

/**
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_max_iters(struct SinksortOptions *opts, size_t value);

/**
 * Exponent `p` of the cost `|x - y|^p`.
 *
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_cost_p(struct SinksortOptions *opts, double value);

/**
 * A [`SinksortSquash`] value. Selectors arrive as plain ints: an
 * out-of-range C enum value must not reach a Rust enum.
 *
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_squash(struct SinksortOptions *opts, int32_t value);

/**
 * A [`SinksortMode`] value.
 *
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_mode(struct SinksortOptions *opts, int32_t value);

/**
 * Nonzero makes unconverged solves fail with `NotConverged` (the default);
 * zero returns the last iterate instead.
 *
 * # Safety
 * `opts` must be null or a live handle from [`sinksort_options_new`].
 */
enum SinksortStatus sinksort_options_set_require_convergence(struct SinksortOptions *opts,
                                                             int32_t value);

/**
 * # Safety
 * `array` must be null or come from this library, freed once.
 */
void sinksort_array_free(struct SinksortArray *array);

/**
 * # Safety
 * `array` must be a live handle.
 */
size_t sinksort_array_rows(const struct SinksortArray *array);

/**
 * # Safety
 * `array` must be a live handle.
 */
size_t sinksort_array_cols(const struct SinksortArray *array);

/**
 * Pointer to `rows * cols` row-major doubles, valid until the array is freed.
 *
 * # Safety
 * `array` must be a live handle.
 */
const double *sinksort_array_data(const struct SinksortArray *array);

/**
 * Soft ranks of `batch` rows of length `n` (row-major `x`), with uniform
 * source weights. The target is the regular grid of `m` points
 * (`m = 0` means `n`) weighted by `target_weights`, or uniformly when it is
 * null. `opts` may be null for defaults. Writes a `batch x n` array to `out`.
 *
 * # Safety
 * `x` must hold `batch * n` doubles; `target_weights`, if not null, `m`.
 */
enum SinksortStatus sinksort_s_rank_batched(const struct SinksortOptions *opts,
                                            const double *x,
                                            size_t batch,
                                            size_t n,
                                            const double *target_weights,
                                            size_t m,
                                            struct SinksortArray **out);

/**
 * Soft sorts; same conventions as [`sinksort_s_rank_batched`], writing a
 * `batch x m` array.
 *
 * # Safety
 * As for [`sinksort_s_rank_batched`].
 */
enum SinksortStatus sinksort_s_sort_batched(const struct SinksortOptions *opts,
                                            const double *x,
                                            size_t batch,
                                            size_t n,
                                            const double *target_weights,
                                            size_t m,
                                            struct SinksortArray **out);

/**
 * Soft `tau`-quantile of `n` values with filler mass `t`. `epsilon`,
 * `eta` and `max_iters` come from `opts` (null for defaults).
 *
 * # Safety
 * `x` must hold `n` doubles and `out` must be writable.
 */
enum SinksortStatus sinksort_soft_quantile(const struct SinksortOptions *opts,
                                           const double *x,
                                           size_t n,
                                           double tau,
                                           double t,
                                           double *out);

/**
 * Soft top-`k` loss of `n` class scores for the zero-based `label`.
 *
 * # Safety
 * `scores` must hold `n` doubles and `out` must be writable.
 */
enum SinksortStatus sinksort_soft_topk_loss(const struct SinksortOptions *opts,
                                            const double *scores,
                                            size_t n,
                                            size_t label,
                                            size_t k,
                                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SINKSORT_H */

#ifndef NETMOMENT_H
#define NETMOMENT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum NmStatus {
  NM_STATUS_OK = 0,
  NM_STATUS_NULL_POINTER = 1,
  NM_STATUS_INVALID_ARGUMENT = 2,
  NM_STATUS_DOMAIN = 3,
  NM_STATUS_CONTRACT = 4,
  NM_STATUS_NUMERICAL = 5,
  NM_STATUS_IO = 6,
  NM_STATUS_BUFFER_TOO_SMALL = 7,
  NM_STATUS_PANIC = 8,
} NmStatus;

/**
 * Norm carrying the budget.
 */
typedef enum NmSpace {
  NM_SPACE_L2 = 0,
  NM_SPACE_W012 = 1,
} NmSpace;

/**
 * Opaque assembled Gram matrix together with its geometry.
 */
typedef struct NmGram NmGram;

/**
 * Opaque solved estimator.
 */
typedef struct NmSolution NmSolution;

/**
 * Problem geometry. `axis` is 0 for up, 1 for down.
 */
typedef struct NmGeometry {
  double s;
  double q;
  double h;
  int axis;
} NmGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL,
 * or 0 if there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t nm_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nm_version(void);

/**
 * Assembles (or loads from the on-disk cache when `use_cache != 0`) the
 * Gram matrix of order `order`.
 *
 * # Safety
 * `geometry` must be valid for reads, `out` for writes.
 */
enum NmStatus nm_gram_new(const struct NmGeometry *geometry,
                          size_t order,
                          int use_cache,
                          struct NmGram **out);

/**
 * Releases a Gram handle. Null is ignored.
 *
 * # Safety
 * `gram` must come from [`nm_gram_new`] and not be used afterwards.
 */
void nm_gram_free(struct NmGram *gram);

/**
 * Truncation order `N`; 0 for a null handle.
 *
 * # Safety
 * `gram` must be null or a live handle.
 */
size_t nm_gram_order(const struct NmGram *gram);

/**
 * `G_{nk}` for `|n|, |k| <= N`.
 *
 * # Safety
 * `gram` must be a live handle; `re`, `im` valid for writes.
 */
enum NmStatus nm_gram_entry(const struct NmGram *gram, long n, long k, double *re, double *im);

/**
 * Estimator for moment `target` (1 or 2) at fixed `lambda`.
 * `space` is an [`NmSpace`] value.
 *
 * # Safety
 * `gram` must be a live handle, `out` valid for writes.
 */
enum NmStatus nm_solve(const struct NmGram *gram,
                       int target,
                       int space,
                       double lambda,
                       int drop_zero_mode,
                       struct NmSolution **out);

/**
 * Estimator whose constraint norm equals `m`.
 *
 * # Safety
 * As [`nm_solve`].
 */
enum NmStatus nm_solve_for_m(const struct NmGram *gram,
                             int target,
                             int space,
                             double m,
                             int drop_zero_mode,
                             struct NmSolution **out);

/**
 * Releases a solution handle. Null is ignored.
 *
 * # Safety
 * `sol` must come from a solve call and not be used afterwards.
 */
void nm_solution_free(struct NmSolution *sol);

/**
 * Writes `λ`, the achieved norm `M`, and the residual.
 *
 * # Safety
 * `sol` must be a live handle; each output pointer may be null to skip it.
 */
enum NmStatus nm_solution_info(const struct NmSolution *sol,
                               double *lambda,
                               double *m,
                               double *residual);

/**
 * Copies the `2N+1` coefficients (`n = -N..=N`) into `re` and `im`.
 *
 * # Safety
 * `re` and `im` must be valid for `len` writes.
 */
enum NmStatus nm_solution_coeffs(const struct NmSolution *sol, double *re, double *im, size_t len);

/**
 * `φ(x)`.
 *
 * # Safety
 * `sol` must be a live handle, `out` valid for writes.
 */
enum NmStatus nm_solution_eval(const struct NmSolution *sol, double x, double *out);

/**
 * Moment estimate `⟨b₂[m], φ⟩` for a piecewise-constant magnetization given
 * as flat `(lo, hi, value)` triples (`n1`, `n2` triples per component).
 *
 * # Safety
 * Piece arrays must hold `3*n1` / `3*n2` doubles; `out` valid for writes.
 */
enum NmStatus nm_estimate_moment(const struct NmSolution *sol,
                                 const double *pieces1,
                                 size_t n1,
                                 const double *pieces2,
                                 size_t n2,
                                 double *out);

/**
 * `b₂[m](x)` at `n` points.
 *
 * # Safety
 * `xs` and `out` must hold `n` doubles; piece arrays as in
 * [`nm_estimate_moment`].
 */
enum NmStatus nm_forward_field(const struct NmGeometry *geometry,
                               const double *pieces1,
                               size_t n1,
                               const double *pieces2,
                               size_t n2,
                               const double *xs,
                               size_t n,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETMOMENT_H */

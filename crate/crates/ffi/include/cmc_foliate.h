#ifndef CMC_FOLIATE_H
#define CMC_FOLIATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmcStatus {
  CMC_STATUS_OK = 0,
  CMC_STATUS_NULL_POINTER = 1,
  CMC_STATUS_DOMAIN = 2,
  CMC_STATUS_SHAPE = 3,
  CMC_STATUS_FOLD = 4,
  CMC_STATUS_PRECONDITION = 5,
  CMC_STATUS_DEGENERATE_MASS = 6,
  CMC_STATUS_DIVERGENCE = 7,
  CMC_STATUS_RANGE = 8,
  CMC_STATUS_UNSUPPORTED_DIMENSION = 9,
  CMC_STATUS_CONFIG = 10,
  CMC_STATUS_IO = 11,
  CMC_STATUS_PANIC = 12,
} CmcStatus;

/**
 * Opaque handle to a swept family of leaves.
 */
typedef struct CmcFoliation CmcFoliation;

/**
 * Opaque handle to one solved leaf.
 */
typedef struct CmcLeaf CmcLeaf;

/**
 * Opaque metric handle.
 */
typedef struct CmcMetric CmcMetric;

/**
 * Scalar summary of a leaf.
 */
typedef struct CmcLeafSummary {
  double r;
  double tau[3];
  double target_h;
  double residual_sup;
  double phi_sup;
  double diam;
  double diam_g;
  double sup_a;
  double area;
  size_t iterations;
} CmcLeafSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *cmc_last_error_message(void);

/**
 * `(1 + σ/|x|^{n−1}) δ` on `|x| ≥ r_min`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CmcStatus cmc_metric_new(size_t n, double sigma, double r_min, struct CmcMetric **out);

/**
 * Conformal metric centered at `center · reference_radius`.
 *
 * # Safety
 * `center` must point to three readable doubles and `out` to writable
 * storage for one handle.
 */
enum CmcStatus cmc_metric_new_translated(size_t n,
                                         double sigma,
                                         const double *center,
                                         double reference_radius,
                                         double r_min,
                                         struct CmcMetric **out);

/**
 * Schwarzschild-like metric plus `eps · p pᵀ (1 + |x|²)^{−n/2}`.
 *
 * # Safety
 * `direction` must point to three readable doubles and `out` to writable
 * storage for one handle.
 */
enum CmcStatus cmc_metric_new_bump(size_t n,
                                   double sigma,
                                   const double *direction,
                                   double eps,
                                   double r_min,
                                   struct CmcMetric **out);

/**
 * # Safety
 * `metric` must be null or a handle from `cmc_metric_new*` not yet freed.
 */
void cmc_metric_free(struct CmcMetric *metric);

/**
 * Writes the row-major `3 × 3` metric at `x` into `g_out`.
 *
 * # Safety
 * `metric` must be a live handle, `x` must point to three readable doubles
 * and `g_out` to nine writable doubles.
 */
enum CmcStatus cmc_metric_at(const struct CmcMetric *metric, const double *x, double *g_out);

/**
 * Solves the leaf at scale `r` from a cold start with default tolerances.
 *
 * # Safety
 * `metric` must be a live handle and `out` writable storage for one handle.
 */
enum CmcStatus cmc_solve_leaf(const struct CmcMetric *metric,
                              double r,
                              size_t lmax,
                              struct CmcLeaf **out);

/**
 * # Safety
 * `leaf` must be null or a handle from `cmc_solve_leaf` not yet freed.
 */
void cmc_leaf_free(struct CmcLeaf *leaf);

/**
 * # Safety
 * `leaf` must be a live handle and `out` writable.
 */
enum CmcStatus cmc_leaf_summary(const struct CmcLeaf *leaf, struct CmcLeafSummary *out);

/**
 * Number of spherical-harmonic coefficients of the leaf's graph function.
 *
 * # Safety
 * `leaf` must be null or a live handle.
 */
size_t cmc_leaf_coeff_count(const struct CmcLeaf *leaf);

/**
 * Copies the coefficients of the rescaled graph function into `buf`, which
 * must hold at least `cmc_leaf_coeff_count(leaf)` doubles.
 *
 * # Safety
 * `leaf` must be a live handle and `buf` must point to `len` writable doubles.
 */
enum CmcStatus cmc_leaf_phi_coeffs(const struct CmcLeaf *leaf, double *buf, size_t len);

/**
 * Sweeps `r_start · ratio^k ≥ r_end` downward; fails on the first leaf that
 * does not converge.
 *
 * # Safety
 * `metric` must be a live handle and `out` writable storage for one handle.
 */
enum CmcStatus cmc_sweep(const struct CmcMetric *metric,
                         double r_start,
                         double r_end,
                         double ratio,
                         size_t lmax,
                         struct CmcFoliation **out);

/**
 * # Safety
 * `fol` must be null or a handle from `cmc_sweep` not yet freed.
 */
void cmc_foliation_free(struct CmcFoliation *fol);

/**
 * # Safety
 * `fol` must be null or a live handle.
 */
size_t cmc_foliation_len(const struct CmcFoliation *fol);

/**
 * # Safety
 * `fol` must be a live handle and `out` writable.
 */
enum CmcStatus cmc_foliation_leaf_summary(const struct CmcFoliation *fol,
                                          size_t index,
                                          struct CmcLeafSummary *out);

/**
 * Smallest radial gap between adjacent leaves; positive when nested.
 *
 * # Safety
 * `fol` must be a live handle and `out` writable.
 */
enum CmcStatus cmc_foliation_nesting_margin(const struct CmcFoliation *fol, double *out);

/**
 * Both sides of the kernel integral inequality at `ell ∈ (0, 1)`.
 *
 * # Safety
 * `lhs` and `rhs` must be writable.
 */
enum CmcStatus cmc_kernel_bound(double ell, size_t n, double *lhs, double *rhs);

/**
 * Small root `r` of `n r − (σ n²/2) rⁿ = h` in `(0, r_max]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CmcStatus cmc_r_from_mean_curvature(double h,
                                         size_t n,
                                         double sigma,
                                         double r_max,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMC_FOLIATE_H */

#ifndef BOLTZINV_H
#define BOLTZINV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BiStatus {
  BI_STATUS_OK = 0,
  BI_STATUS_INVALID_ARGUMENT = 1,
  BI_STATUS_OUT_OF_RANGE = 2,
  BI_STATUS_SHAPE_MISMATCH = 3,
  BI_STATUS_SUPPORT_VIOLATION = 4,
  BI_STATUS_CFL = 5,
  BI_STATUS_INVALID_WEIGHT = 6,
  BI_STATUS_VANISHING_SYMBOL = 7,
  BI_STATUS_DIVERGENCE = 8,
  BI_STATUS_STAGNATION = 9,
  BI_STATUS_NON_FINITE = 10,
  BI_STATUS_IO = 11,
  BI_STATUS_FORMAT = 12,
  BI_STATUS_NULL_POINTER = 13,
  BI_STATUS_PANIC = 14,
} BiStatus;

/**
 * Spacetime lattice.
 */
typedef struct BiLattice BiLattice;

/**
 * Direction quadrature on the unit sphere.
 */
typedef struct BiQuadrature BiQuadrature;

/**
 * Real ray data `g(x, theta)`.
 */
typedef struct BiRayData BiRayData;

/**
 * Real scalar field `f(t, x)`.
 */
typedef struct BiScalarField BiScalarField;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread (empty after a success).
 * Valid until the next `bi_*` call on the same thread.
 */
const char *bi_last_error(void);

/**
 * Library version, static string.
 */
const char *bi_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BiStatus bi_lattice_new(double t_final,
                             size_t n_t,
                             double box_len,
                             size_t n_x,
                             double margin,
                             struct BiLattice **out);

/**
 * # Safety
 * `lat` must come from `bi_lattice_new` (or be null) and not be used afterwards.
 */
void bi_lattice_free(struct BiLattice *lat);

/**
 * Number of spatial points `n_x^3` (0 for a null handle).
 *
 * # Safety
 * `lat` must be a live handle or null.
 */
size_t bi_lattice_n_space(const struct BiLattice *lat);

/**
 * Number of window time samples (0 for a null handle).
 *
 * # Safety
 * `lat` must be a live handle or null.
 */
size_t bi_lattice_n_t(const struct BiLattice *lat);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum BiStatus bi_quadrature_new(size_t degree, struct BiQuadrature **out);

/**
 * # Safety
 * `q` must come from `bi_quadrature_new` (or be null) and not be used afterwards.
 */
void bi_quadrature_free(struct BiQuadrature *q);

/**
 * Number of directions (0 for a null handle).
 *
 * # Safety
 * `q` must be a live handle or null.
 */
size_t bi_quadrature_len(const struct BiQuadrature *q);

/**
 * Copies the quadrature weights (they sum to `4 pi`) into `dst`.
 *
 * # Safety
 * `dst` must point to `len` writable doubles.
 */
enum BiStatus bi_quadrature_weights(const struct BiQuadrature *q, double *dst, size_t len);

/**
 * Window field from `n_t * n_space` values, layout `[t][x][y][z]`.
 *
 * # Safety
 * `values` must point to `len` readable doubles; `out` to storage for one handle.
 */
enum BiStatus bi_scalar_field_new(const struct BiLattice *lat,
                                  const double *values,
                                  size_t len,
                                  struct BiScalarField **out);

/**
 * # Safety
 * `f` must come from this library (or be null) and not be used afterwards.
 */
void bi_scalar_field_free(struct BiScalarField *f);

/**
 * Number of stored values (0 for a null handle).
 *
 * # Safety
 * `f` must be a live handle or null.
 */
size_t bi_scalar_field_len(const struct BiScalarField *f);

/**
 * Copies the values into `dst`, which must hold exactly `len` doubles.
 *
 * # Safety
 * `dst` must point to `len` writable doubles.
 */
enum BiStatus bi_scalar_field_copy(const struct BiScalarField *f, double *dst, size_t len);

/**
 * # Safety
 * `g` must come from this library (or be null) and not be used afterwards.
 */
void bi_ray_data_free(struct BiRayData *g);

/**
 * Number of stored values, `n_dirs * n_space` (0 for a null handle).
 *
 * # Safety
 * `g` must be a live handle or null.
 */
size_t bi_ray_data_len(const struct BiRayData *g);

/**
 * # Safety
 * `dst` must point to `len` writable doubles.
 */
enum BiStatus bi_ray_data_copy(const struct BiRayData *g, double *dst, size_t len);

/**
 * Light ray transform `L f(x, theta) = int f(s, x + s theta) ds`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum BiStatus bi_lray(const struct BiScalarField *f,
                      const struct BiQuadrature *q,
                      struct BiRayData **out);

/**
 * Transpose of `bi_lray` in the discrete L2 pairing, on the window times.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum BiStatus bi_lray_adjoint(const struct BiRayData *g, struct BiScalarField **out);

/**
 * Measurement `u(T, x, theta)` for constant absorption `sigma` and an
 * isotropic kernel `lambda * c(t, x) / 4 pi` (`c` may be null for no
 * scattering).
 *
 * # Safety
 * Handles must be live or, for `c`, null; `out` must be writable.
 */
enum BiStatus bi_boltzmann_measure(const struct BiScalarField *f,
                                   const struct BiQuadrature *q,
                                   double sigma,
                                   const struct BiScalarField *c,
                                   double lambda,
                                   struct BiRayData **out);

/**
 * Direct recovery of `phi(D)(kappa f)` (padded time axis) from `u_T` for
 * constant absorption and no scattering.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum BiStatus bi_recover_spacelike(const struct BiRayData *ut,
                                   double sigma,
                                   struct BiScalarField **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOLTZINV_H */

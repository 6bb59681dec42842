#ifndef LINF_ACCEL_H
#define LINF_ACCEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LinfStatus {
  LINF_STATUS_OK = 0,
  LINF_STATUS_NULL_POINTER = 1,
  LINF_STATUS_VALIDATION = 2,
  LINF_STATUS_NON_CONVERGENCE = 3,
  /**
   * The field vanished and integration halted early; the trajectory up to
   * that time is still returned.
   */
  LINF_STATUS_NUMERICAL_EVENT = 4,
  LINF_STATUS_INTERNAL = 5,
} LinfStatus;

/**
 * Opaque sampled solution.
 */
typedef struct LinfTrajectory LinfTrajectory;

/**
 * Integration settings. Pass NULL for the defaults
 * (`rtol = 1e-10`, `atol = 1e-12`, 2048 samples).
 */
typedef struct LinfTolerances {
  double rtol;
  double atol;
  size_t samples;
} LinfTolerances;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread; do not free.
 */
const char *linf_last_error(void);

/**
 * Integrates the extremal system on the unit sphere in `R^n` (`n ≥ 2`).
 * `x`, `xdot`, `field` and `field_rate` each hold `n` doubles.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum LinfStatus linf_sphere_integrate(size_t n,
                                      const double *x,
                                      const double *xdot,
                                      const double *field,
                                      const double *field_rate,
                                      double z,
                                      double t0,
                                      double t1,
                                      const struct LinfTolerances *tol,
                                      struct LinfTrajectory **out);

/**
 * Integrates the reduced `SO(3)` system `V' = zW/‖W‖`, `W' = W × V + C`.
 * `v`, `w` and `c` each hold 3 doubles.
 *
 * # Safety
 * Pointers must be valid for 3 doubles; `out` must be writable.
 */
enum LinfStatus linf_so3_integrate(const double *v,
                                   const double *w,
                                   double z,
                                   const double *c,
                                   double t0,
                                   double t1,
                                   const struct LinfTolerances *tol,
                                   struct LinfTrajectory **out);

/**
 * Conserved quantities `c = ‖W'‖²` and `a = z‖W‖ − ⟨C, V⟩` of a reduced state.
 *
 * # Safety
 * Input pointers must be valid for 3 doubles; outputs must be writable.
 */
enum LinfStatus linf_so3_conserved(const double *v,
                                   const double *w,
                                   double z,
                                   const double *c,
                                   double *out_c,
                                   double *out_a);

/**
 * Number of samples, or 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t linf_trajectory_len(const struct LinfTrajectory *t);

/**
 * Length of each state vector, or 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
size_t linf_trajectory_state_dim(const struct LinfTrajectory *t);

/**
 * # Safety
 * `t` must be NULL or a live handle; `out` must be writable.
 */
enum LinfStatus linf_trajectory_time(const struct LinfTrajectory *t, size_t i, double *out);

/**
 * Copies sample `i` into `out`, which must hold `len ≥ state_dim` doubles.
 *
 * # Safety
 * `t` must be NULL or a live handle; `out` must be writable for `len` doubles.
 */
enum LinfStatus linf_trajectory_state(const struct LinfTrajectory *t,
                                      size_t i,
                                      double *out,
                                      size_t len);

/**
 * Diagnostics report as a JSON string (free with [`linf_string_free`]), or
 * NULL on failure.
 *
 * # Safety
 * `t` must be NULL or a live handle.
 */
char *linf_trajectory_report_json(const struct LinfTrajectory *t);

/**
 * # Safety
 * `t` must be NULL or a handle not yet freed.
 */
void linf_trajectory_free(struct LinfTrajectory *t);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void linf_string_free(char *s);

/**
 * Runs a JSON run configuration and writes its artifacts into `out_dir`.
 * Returns the command-line exit code (0 success, 2 validation,
 * 3 nonconvergence, 4 numerical event, 5 failed verdict, 1 I/O, 6 internal
 * error, -1 bad arguments).
 *
 * # Safety
 * Both arguments must be NULL or NUL-terminated UTF-8 strings.
 */
int32_t linf_run_config(const char *config_json, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINF_ACCEL_H */

#ifndef WAVELAB_H
#define WAVELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  WL_STATUS_OK = 0,
  /**
   * Null pointer, bad size or out-of-range argument.
   */
  WL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Parameters or speed outside the admissible regime.
   */
  WL_STATUS_VALIDATION = 2,
  WL_STATUS_NOT_CONVERGED = 3,
  WL_STATUS_BLOWUP = 4,
  WL_STATUS_IO = 5,
  WL_STATUS_PARSE = 6,
  WL_STATUS_GRID_MISMATCH = 7,
  /**
   * The caller's buffer is too small.
   */
  WL_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * An internal panic was caught at the boundary.
   */
  WL_STATUS_INTERNAL = 9,
} WlStatus;

/**
 * Model coefficients `(a, b, c, p)`.
 */
typedef struct WlParams WlParams;

/**
 * A converged solitary wave with its derived quantities.
 */
typedef struct WlWave WlWave;

/**
 * Functional values of a wave profile.
 */
typedef struct {
  double h;
  double q;
  double i1;
  double i2w;
  double iw;
  double g;
  double jw;
  double kw;
  double d;
  double iw_min;
} WlFunctionals;

/**
 * Summary of an evolution or stability run.
 */
typedef struct {
  size_t steps;
  double dt;
  double drift_h;
  double drift_q;
  double initial_distance;
  double sup_distance;
  double final_distance;
  /**
   * `sup_distance / max(initial_distance, 1e-6)`
   */
  double ratio;
  /**
   * 1 when the run reached the final time without blow-up.
   */
  int32_t completed;
} WlRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 * `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t wl_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wl_version(void);

/**
 * Critical exponent bisected to `tol` (at least `1e-12`).
 *
 * # Safety
 * `out_p0` must be a valid pointer.
 */
WlStatus wl_critical_p0(double tol, double *out_p0);

/**
 * Closed-form `int (w0^2 + m w0'^2)` of the KdV soliton.
 *
 * # Safety
 * `out_j0` must be a valid pointer.
 */
WlStatus wl_j0_closed(double p, double m, double *out_j0);

/**
 * # Safety
 * `out_params` must be a valid pointer; the handle it receives is owned
 * by the caller.
 */
WlStatus wl_params_new(double a, double b, double c, double p, WlParams **out_params);

/**
 * `a = c = -1/6`, `b = 1/12`.
 *
 * # Safety
 * As [`wl_params_new`].
 */
WlStatus wl_params_reference(double p, WlParams **out_params);

/**
 * # Safety
 * `params` must be null or a handle from `wl_params_new`, not yet freed.
 */
void wl_params_free(WlParams *params);

/**
 * Checks the existence regime (`level = 0`) or the stability regime
 * (`level = 1`); failures return `Validation` with the failed conditions.
 *
 * # Safety
 * `params` must be a valid handle.
 */
WlStatus wl_params_validate(const WlParams *params, int32_t level);

/**
 * Solves for the wave of speed `omega` on `n` points. `length <= 0` picks
 * the default domain; `tol <= 0` keeps the default residual ceiling.
 *
 * # Safety
 * `params` must be a valid handle and `out_wave` a valid pointer.
 */
WlStatus wl_wave_solve(const WlParams *params,
                       double omega,
                       double length,
                       size_t n,
                       double tol,
                       WlWave **out_wave);

/**
 * Loads a wave snapshot written by [`wl_wave_write`] or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_wave` a valid pointer.
 */
WlStatus wl_wave_read(const char *path, WlWave **out_wave);

/**
 * Writes the `x,eta,u` CSV and its metadata sidecar.
 *
 * # Safety
 * `wave` must be a valid handle and `path` a NUL-terminated string.
 */
WlStatus wl_wave_write(const WlWave *wave, const char *path);

/**
 * # Safety
 * `wave` must be null or a handle from a `wl_wave_*` constructor, not yet freed.
 */
void wl_wave_free(WlWave *wave);

/**
 * Speed of the wave, or NaN for a null handle.
 *
 * # Safety
 * `wave` must be null or a valid handle.
 */
double wl_wave_omega(const WlWave *wave);

/**
 * Max-norm residual of the profile equations, or NaN for a null handle.
 *
 * # Safety
 * `wave` must be null or a valid handle.
 */
double wl_wave_residual(const WlWave *wave);

/**
 * Number of grid points, or 0 for a null handle.
 *
 * # Safety
 * `wave` must be null or a valid handle.
 */
size_t wl_wave_grid_size(const WlWave *wave);

/**
 * Periodic cell length, or NaN for a null handle.
 *
 * # Safety
 * `wave` must be null or a valid handle.
 */
double wl_wave_domain_length(const WlWave *wave);

/**
 * # Safety
 * `wave` must be a valid handle and `out_f` a valid pointer.
 */
WlStatus wl_wave_functionals(const WlWave *wave, WlFunctionals *out_f);

/**
 * Copies grid points and the profile `(eta, u)` into caller buffers of
 * length `len`; any of `x`, `eta`, `u` may be null to skip it. Returns
 * `BufferTooSmall` when `len` is below the grid size.
 *
 * # Safety
 * Non-null buffers must hold `len` doubles.
 */
WlStatus wl_wave_copy_profile(const WlWave *wave, double *x, double *eta, double *u, size_t len);

/**
 * Evolves the exact wave to `t_final` with the largest CFL step times
 * `cfl_safety` and reports conservation and orbit distance to the profile.
 *
 * # Safety
 * `wave` must be a valid handle and `out_s` a valid pointer.
 */
WlStatus wl_wave_evolve(const WlWave *wave, double t_final, double cfl_safety, WlRunSummary *out_s);

/**
 * Perturbs the wave (`kind` 0 scale, 1 bump, 2 mode; relative `amplitude`
 * in `[0, 0.2]`), evolves to `t_final` and reports the orbit distance.
 *
 * # Safety
 * `wave` must be a valid handle and `out_s` a valid pointer.
 */
WlStatus wl_stability_run(const WlWave *wave,
                          int32_t kind,
                          double amplitude,
                          uint64_t seed,
                          double t_final,
                          WlRunSummary *out_s);

/**
 * `inf_y ||(eta1, u1) - (eta2, u2)(. + y)||_{H1 x H1}` for two states on
 * the grid of `n` points over a cell of length `length`.
 *
 * # Safety
 * The four arrays must hold `n` doubles; the out-pointers must be valid.
 */
WlStatus wl_orbit_distance(const double *eta1,
                           const double *u1,
                           const double *eta2,
                           const double *u2,
                           size_t n,
                           double length,
                           double *out_dist,
                           double *out_shift);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVELAB_H */

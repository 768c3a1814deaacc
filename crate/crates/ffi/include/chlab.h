#ifndef CHLAB_H
#define CHLAB_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all functions.
typedef enum ChlabStatus {
  CHLAB_STATUS_OK = 0,
  CHLAB_STATUS_NULL_POINTER = 1,
  CHLAB_STATUS_INVALID_ARGUMENT = 2,
  CHLAB_STATUS_NUMERICAL = 3,
  CHLAB_STATUS_BUFFER_TOO_SMALL = 4,
  CHLAB_STATUS_CONFIG = 5,
  CHLAB_STATUS_IO = 6,
  CHLAB_STATUS_PANIC = 99,
} ChlabStatus;

// Periodic grid on `[-L/2, L/2)`.
typedef struct ChlabGrid ChlabGrid;

// Sampled soliton with its momentum density.
typedef struct ChlabProfile ChlabProfile;

// Closed-form energies of a soliton and their speed derivatives.
typedef struct ChlabInvariants {
  double kappa;
  double h1;
  double h2;
  double dh1_dc;
  double dh2_dc;
} ChlabInvariants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL.
//
// The pointer stays valid until the next call into the library from the
// same thread.
const char *chlab_last_error(void);

// Library version as a static NUL-terminated string.
const char *chlab_version(void);

// Creates a grid of `n` points on a box of length `length`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum ChlabStatus chlab_grid_new(size_t n, double length, struct ChlabGrid **out);

// Number of grid points.
//
// # Safety
// `grid` must be NULL or a live handle from [`chlab_grid_new`].
enum ChlabStatus chlab_grid_len(const struct ChlabGrid *grid, size_t *out);

// Copies the collocation points into `out`.
//
// # Safety
// `grid` must be a live handle, `out` must hold `capacity` doubles and
// `out_len` must be NULL or writable.
enum ChlabStatus chlab_grid_points(const struct ChlabGrid *grid,
                                   double *out,
                                   size_t capacity,
                                   size_t *out_len);

// Releases a grid. NULL is ignored.
//
// # Safety
// `grid` must be NULL or a handle not yet freed.
void chlab_grid_free(struct ChlabGrid *grid);

// Builds the soliton of speed `c` on background `omega`, peaked at `x_peak`.
//
// # Safety
// `grid` must be a live handle and `out` writable.
enum ChlabStatus chlab_profile_new(const struct ChlabGrid *grid,
                                   double c,
                                   double omega,
                                   double x_peak,
                                   struct ChlabProfile **out);

// Copies the profile `φ` into `out`.
//
// # Safety
// Same contract as [`chlab_grid_points`].
enum ChlabStatus chlab_profile_phi(const struct ChlabProfile *profile,
                                   double *out,
                                   size_t capacity,
                                   size_t *out_len);

// Copies the momentum density `m = φ - φ''` into `out`.
//
// # Safety
// Same contract as [`chlab_grid_points`].
enum ChlabStatus chlab_profile_momentum(const struct ChlabProfile *profile,
                                        double *out,
                                        size_t capacity,
                                        size_t *out_len);

// Maximum residual of the travelling-wave equation on the grid.
//
// # Safety
// `profile` must be a live handle and `out` writable.
enum ChlabStatus chlab_profile_residual(const struct ChlabProfile *profile, double *out);

// Discrete eigenvalues `κ_n` of the Lax problem with the profile as potential.
//
// Writes at most `capacity` values and stores the count in `out_len`.
//
// # Safety
// Same contract as [`chlab_grid_points`].
enum ChlabStatus chlab_profile_kappas(const struct ChlabProfile *profile,
                                      double *out,
                                      size_t capacity,
                                      size_t *out_len);

// Releases a profile. NULL is ignored.
//
// # Safety
// `profile` must be NULL or a handle not yet freed.
void chlab_profile_free(struct ChlabProfile *profile);

// Closed-form invariants of the `(c, omega)` soliton.
//
// # Safety
// `out` must be writable.
enum ChlabStatus chlab_closed_form_invariants(double c, double omega, struct ChlabInvariants *out);

// Runs an experiment from TOML text and returns the report as JSON.
//
// `passed` receives 1 when every assertion held. The JSON string must be
// released with [`chlab_string_free`].
//
// # Safety
// `toml` must be a NUL-terminated string; `out_json` and `passed` must be
// writable (`passed` may be NULL).
enum ChlabStatus chlab_run_toml(const char *toml, char **out_json, int32_t *passed);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void chlab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHLAB_H */

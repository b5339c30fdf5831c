#ifndef HAVOK_H
#define HAVOK_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes. Codes 2 to 4 match the `havok` CLI's exit codes.
typedef enum HavokStatus {
  HAVOK_STATUS_OK = 0,
  HAVOK_STATUS_NULL_POINTER = 1,
  // Invalid parameter or option.
  HAVOK_STATUS_CONFIG = 2,
  // Input data unusable: too short, constant, out of range, non-finite.
  HAVOK_STATUS_DATA = 3,
  // A numerical procedure failed (singular system, no convergence).
  HAVOK_STATUS_NUMERIC = 4,
  HAVOK_STATUS_BUFFER_TOO_SMALL = 5,
  // A Rust panic was caught at the boundary. Please report it.
  HAVOK_STATUS_PANIC = 6,
} HavokStatus;

// How the forcing coordinate is supplied to [`havok_model_forecast`].
typedef enum HavokForcingMode {
  HAVOK_FORCING_MODE_MEASURED = 0,
  HAVOK_FORCING_MODE_ZERO = 1,
  HAVOK_FORCING_MODE_HELD = 2,
} HavokForcingMode;

// Fitted model. Create with [`havok_model_fit`] or
// [`havok_model_from_json`], release with [`havok_model_free`].
typedef struct HavokModel HavokModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or "" if none. The pointer
// stays valid until the next failing call on the same thread.
const char *havok_last_error(void);

// Library version as a static NUL-terminated string.
const char *havok_version(void);

// Fit a forced linear model to `x[0..n]` sampled every `dt`.
//
// `rank` is NULL (default 15), an integer string, `"hard-threshold"` or
// `"energy:<fraction>"`.
//
// # Safety
// `x` must hold `n` doubles, `rank` must be NULL or NUL-terminated and
// `model` must be writable.
enum HavokStatus havok_model_fit(const double *x,
                                 size_t n,
                                 double dt,
                                 size_t tau,
                                 size_t dim,
                                 const char *rank,
                                 double lambda,
                                 double eps,
                                 struct HavokModel **model);

// Release a model. NULL is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void havok_model_free(struct HavokModel *model);

// Number of retained delay coordinates r (the last one is the forcing).
//
// # Safety
// `model` must be a live handle and `r` writable.
enum HavokStatus havok_model_rank(const struct HavokModel *model, size_t *r);

// Linear block A, (r-1) x (r-1), row-major.
//
// # Safety
// Buffer convention; `model` must be a live handle.
enum HavokStatus havok_model_dynamics(const struct HavokModel *model,
                                      double *out_a,
                                      size_t cap,
                                      size_t *len);

// Forcing column B, length r-1.
//
// # Safety
// Buffer convention; `model` must be a live handle.
enum HavokStatus havok_model_forcing_gain(const struct HavokModel *model,
                                          double *out_b,
                                          size_t cap,
                                          size_t *len);

// Full singular spectrum of the training Hankel matrix, descending.
//
// # Safety
// Buffer convention; `model` must be a live handle.
enum HavokStatus havok_model_singular_values(const struct HavokModel *model,
                                             double *out_s,
                                             size_t cap,
                                             size_t *len);

// Training forcing coordinate v_r (empty for models loaded from JSON).
//
// # Safety
// Buffer convention; `model` must be a live handle.
enum HavokStatus havok_model_forcing(const struct HavokModel *model,
                                     double *out_v,
                                     size_t cap,
                                     size_t *len);

// Delay coordinates of new data `x[0..n]`, n_t x r row-major, where
// n_t = n - (dim - 1) * tau.
//
// # Safety
// Buffer convention; `x` must hold `n` doubles.
enum HavokStatus havok_model_project(const struct HavokModel *model,
                                     const double *x,
                                     size_t n,
                                     double *out_v,
                                     size_t cap,
                                     size_t *len);

// Integrate the model for `steps` steps from `v0` (length r-1) and write
// the reconstructed signal to `x_hat` (length `steps`).
//
// With `HAVOK_FORCING_MODE_MEASURED`, `forcing` must hold at least `steps`
// values; it is ignored otherwise.
//
// # Safety
// `v0` holds `v0_len` doubles, `forcing` holds `forcing_len` doubles and
// `x_hat` has room for `steps` doubles.
enum HavokStatus havok_model_forecast(const struct HavokModel *model,
                                      const double *v0,
                                      size_t v0_len,
                                      enum HavokForcingMode mode,
                                      const double *forcing,
                                      size_t forcing_len,
                                      size_t steps,
                                      double *x_hat);

// Serialize a model to JSON. Release the string with [`havok_string_free`].
//
// # Safety
// `model` must be a live handle and `json` writable.
enum HavokStatus havok_model_to_json(const struct HavokModel *model, char **json);

// Load a model written by [`havok_model_to_json`] or `havok fit`'s `model` field.
//
// # Safety
// `json` must be NUL-terminated and `model` writable.
enum HavokStatus havok_model_from_json(const char *json, struct HavokModel **model);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void havok_string_free(char *s);

// Half-open intervals `[start, end)` where |v| exceeds `eps`, merging
// gaps of at most `merge_window` samples. Starts and ends are written to
// separate buffers of capacity `cap`; `*count` receives the interval count.
//
// # Safety
// `v` holds `n` doubles; buffer convention for `starts` and `ends`.
enum HavokStatus havok_forcing_active(const double *v,
                                      size_t n,
                                      double eps,
                                      size_t merge_window,
                                      size_t *starts,
                                      size_t *ends,
                                      size_t cap,
                                      size_t *count);

// Delay at the first local minimum of the histogram AMI curve over
// 1..=tau_max (`bins` equal-width bins).
//
// # Safety
// `x` holds `n` doubles and `tau` is writable.
enum HavokStatus havok_select_delay(const double *x,
                                    size_t n,
                                    size_t tau_max,
                                    size_t bins,
                                    size_t *tau);

// Embedding dimension from the false-nearest-neighbour curve over
// d = 1..=d_max. Pass `r_tol` or `a_tol` <= 0 for the defaults.
//
// # Safety
// `x` holds `n` doubles and `dim` is writable.
enum HavokStatus havok_select_dimension(const double *x,
                                        size_t n,
                                        size_t tau,
                                        size_t d_max,
                                        double drop_threshold,
                                        double r_tol,
                                        double a_tol,
                                        size_t *dim);

// Maximum-likelihood fit of one family (e.g. "Normal", "GEV", "Weibull")
// followed by a one-sample K-S test at `significance`.
//
// Parameters are written in the family's documented order; `*n_params`
// receives their count. `*passed` is 1 when the fit is not rejected.
//
// # Safety
// `samples` holds `n` doubles; buffer convention for `params`; the other
// outputs must be writable.
enum HavokStatus havok_fit_distribution(const double *samples,
                                        size_t n,
                                        const char *family,
                                        double significance,
                                        double *params,
                                        size_t cap,
                                        size_t *n_params,
                                        double *ks_statistic,
                                        double *p_value,
                                        int32_t *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAVOK_H */

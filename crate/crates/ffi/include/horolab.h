#ifndef HOROLAB_H
#define HOROLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  // Overflow, failed reduction or non-convergence.
  HL_STATUS_NUMERIC = 1,
  // Invalid input, non-admissible τ or insufficient lattice cutoff.
  HL_STATUS_CONFIG = 2,
  HL_STATUS_NULL_POINTER = 3,
  HL_STATUS_PANIC = 4,
} HlStatus;

// Opaque Poincaré-sum bump observable.
typedef struct HlObservable HlObservable;

// Opaque admissible time change `τ = 1 + ε ψ`, normalized to mean one.
typedef struct HlTimeChange HlTimeChange;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *hl_version(void);

// Message of the last failed call on this thread (empty if none). The
// pointer stays valid until the next failing call on the same thread.
const char *hl_last_error_message(void);

// Builds a bump observable centered at `center` with Frobenius radius
// `radius`. `cutoff <= 0` selects the minimal certified cutoff.
//
// # Safety
// `center` must point to 4 doubles and `out` to writable storage.
enum HlStatus hl_observable_new(const double *center,
                                double radius,
                                double amplitude,
                                int64_t cutoff,
                                struct HlObservable **out);

// # Safety
// `obs` must come from [`hl_observable_new`] and not be used afterwards.
void hl_observable_free(struct HlObservable *obs);

// Value of the observable at the coset of `g`.
//
// # Safety
// Pointers must be valid; `g` points to 4 doubles.
enum HlStatus hl_observable_eval(const struct HlObservable *obs, const double *g, double *out);

// Builds `τ = 1 + ε ψ` from a copy of `psi`, normalizing with
// `normalization_samples` Haar samples drawn from `seed`.
//
// # Safety
// `psi` must be a live observable handle and `out` writable.
enum HlStatus hl_tau_new(double epsilon,
                         const struct HlObservable *psi,
                         uint64_t seed,
                         uint64_t normalization_samples,
                         struct HlTimeChange **out);

// # Safety
// `tau` must come from [`hl_tau_new`] and not be used afterwards.
void hl_tau_free(struct HlTimeChange *tau);

// Certified bound `m_τ`.
//
// # Safety
// Pointers must be valid.
enum HlStatus hl_tau_m_tau(const struct HlTimeChange *tau, double *out);

// `τ` at the coset of `g`.
//
// # Safety
// Pointers must be valid; `g` points to 4 doubles.
enum HlStatus hl_tau_eval(const struct HlTimeChange *tau, const double *g, double *out);

// Cocycle `u(x, t)` for `x` the coset of `g`. Non-positive `step`/`tol`
// select the defaults (1/64, 1e-9).
//
// # Safety
// Pointers must be valid; `g` points to 4 doubles.
enum HlStatus hl_cocycle_u(const struct HlTimeChange *tau,
                           const double *g,
                           double t,
                           double step,
                           double tol,
                           double *out);

// Reduced representative of `h^τ_t(x)` written to `out[0..4]`.
//
// # Safety
// `g` points to 4 doubles, `out` to 4 writable doubles.
enum HlStatus hl_flow_timechanged(const struct HlTimeChange *tau,
                                  const double *g,
                                  double t,
                                  double step,
                                  double tol,
                                  double *out);

// Fundamental-domain representative of the coset of `g`, written to
// `out[0..4]`; its height is written to `height` when non-null.
//
// # Safety
// `g` points to 4 doubles, `out` to 4 writable doubles.
enum HlStatus hl_reduce(const double *g, double *out, double *height);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOROLAB_H */

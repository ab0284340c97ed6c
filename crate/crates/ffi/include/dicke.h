#ifndef DICKE_H
#define DICKE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum {
  DICKE_STATUS_OK = 0,
  DICKE_STATUS_NULL_POINTER = 1,
  /**
   * Rejected before any computation.
   */
  DICKE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A numerical contract failed while computing.
   */
  DICKE_STATUS_NUMERICAL = 3,
  DICKE_STATUS_IO = 4,
  DICKE_STATUS_PANIC = 5,
} DickeStatus;

/**
 * Observable rotated by the FOTOC kick.
 */
typedef enum {
  /**
   * X = (a + a†)/2.
   */
  DICKE_GENERATOR_QUADRATURE = 0,
  DICKE_GENERATOR_SPIN_Y = 1,
  DICKE_GENERATOR_NUMBER = 2,
} DickeGenerator;

/**
 * Model parameters plus a propagator built on first use.
 */
typedef struct DickeModel DickeModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dicke_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dicke_version(void);

/**
 * Creates a model with couplings in kHz and boson cutoff `n_max`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
DickeStatus dicke_model_new(size_t n_spins,
                            double g_khz,
                            double delta_khz,
                            double b_khz,
                            size_t n_max,
                            DickeModel **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `model` must come from [`dicke_model_new`] and not have been freed.
 */
void dicke_model_free(DickeModel *model);

/**
 * Critical field B_c = 4g²/δ in kHz.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
DickeStatus dicke_critical_field_khz(const DickeModel *model, double *out);

/**
 * FOTOC F(t) and var(G)(t) of |−N/2⟩_x ⊗ |0⟩ on an ascending grid of
 * `len` times in ms.
 *
 * # Safety
 * `times` must hold `len` readable values and `fidelity`, `variance` room
 * for `len` values each.
 */
DickeStatus dicke_fotoc(const DickeModel *model,
                        DickeGenerator generator,
                        double dphi,
                        const double *times,
                        size_t len,
                        double *fidelity,
                        double *variance);

/**
 * Maximal mean-field Lyapunov exponent (ms⁻¹) from S = (−N/2, 0, 0), α = 0.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
DickeStatus dicke_lyapunov_max(const DickeModel *model, double t_end_ms, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DICKE_H */

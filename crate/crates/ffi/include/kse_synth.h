#ifndef KSE_SYNTH_H
#define KSE_SYNTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KseStatus {
  KSE_STATUS_OK = 0,
  KSE_STATUS_NULL = 1,
  KSE_STATUS_INVALID_ARGUMENT = 2,
  KSE_STATUS_SCHEMA = 3,
  KSE_STATUS_ASSUMPTION = 4,
  KSE_STATUS_INDETERMINATE = 5,
  KSE_STATUS_NUMERICAL = 6,
  KSE_STATUS_INFEASIBLE_AT_UPPER = 7,
  KSE_STATUS_IO = 8,
  KSE_STATUS_BUFFER_TOO_SMALL = 9,
  KSE_STATUS_PANIC = 10,
  /**
   * A job ran but failed for a reason outside the classes above.
   */
  KSE_STATUS_FAILED = 11,
} KseStatus;

typedef enum KseVerdict {
  KSE_VERDICT_FEASIBLE = 0,
  KSE_VERDICT_INFEASIBLE = 1,
  KSE_VERDICT_INDETERMINATE = 2,
} KseVerdict;

/**
 * Result of an LMI solve.
 */
typedef struct KseCertificate KseCertificate;

/**
 * Plant parameters (regime, nu, delta, sensing point, weights).
 */
typedef struct KsePlant KsePlant;

/**
 * Sampled closed-loop run.
 */
typedef struct KseTrajectory KseTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread ("" after a success).
 * The pointer stays valid until the next call on this thread.
 */
const char *kse_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *kse_version(void);

/**
 * Dirichlet-actuated plant sensed at x_star.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum KseStatus kse_plant_new_dirichlet(double nu,
                                       double x_star,
                                       double delta,
                                       struct KsePlant **out);

/**
 * Neumann-actuated plant with the given Sobolev split.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum KseStatus kse_plant_new_neumann(double nu,
                                     double sobolev_split,
                                     double delta,
                                     struct KsePlant **out);

/**
 * Sets the performance weights used by the gain LMI and J.
 *
 * # Safety
 * `plant` must be a handle from `kse_plant_new_*` or null.
 */
enum KseStatus kse_plant_set_weights(struct KsePlant *plant, double rho_w, double rho_u);

/**
 * Gain lengths the plant expects: K0 acts on [u, w_low], L0 on w_low.
 *
 * # Safety
 * `plant` must be live; `k0_len` and `l0_len` must be writable.
 */
enum KseStatus kse_plant_gain_dims(const struct KsePlant *plant, size_t *k0_len, size_t *l0_len);

/**
 * # Safety
 * `plant` must be a handle from `kse_plant_new_*` that is not used again, or null.
 */
void kse_plant_free(struct KsePlant *plant);

/**
 * Solves the stabilization LMI at observer dimension n. A certificate is
 * returned for every verdict; inspect it with `kse_certificate_verdict`.
 *
 * # Safety
 * `plant` must be live; `k0`/`l0` must point to `k0_len`/`l0_len` doubles;
 * `out` must be writable.
 */
enum KseStatus kse_stab_check(const struct KsePlant *plant,
                              const double *k0,
                              size_t k0_len,
                              const double *l0,
                              size_t l0_len,
                              size_t n,
                              struct KseCertificate **out);

/**
 * Smallest gamma on the grid tol * k with a feasible gain LMI at dimension n.
 * Pass gamma_lo <= 0 to start the bracket at zero. `out_cert` may be null.
 *
 * # Safety
 * As for `kse_stab_check`; `out_gamma` must be writable.
 */
enum KseStatus kse_min_gamma(const struct KsePlant *plant,
                             const double *k0,
                             size_t k0_len,
                             const double *l0,
                             size_t l0_len,
                             size_t n,
                             double gamma_lo,
                             double gamma_hi,
                             double tol,
                             double *out_gamma,
                             struct KseCertificate **out_cert);

/**
 * # Safety
 * `cert` must be live; `out` must be writable.
 */
enum KseStatus kse_certificate_verdict(const struct KseCertificate *cert, enum KseVerdict *out);

/**
 * Verified margin -lambda_max of the equilibrated LMI (positive when feasible).
 *
 * # Safety
 * `cert` must be live; `out` must be writable.
 */
enum KseStatus kse_certificate_margin(const struct KseCertificate *cert, double *out);

/**
 * gamma the certificate was computed at (NaN for stabilization certificates).
 *
 * # Safety
 * `cert` must be live; `out` must be writable.
 */
enum KseStatus kse_certificate_gamma(const struct KseCertificate *cert, double *out);

/**
 * Copies the Lyapunov matrix P (row-major, dim x dim) into `buf`.
 * `dim` is always written; KSE_STATUS_BUFFER_TOO_SMALL if len < dim * dim.
 *
 * # Safety
 * `cert` must be live; `buf` must hold `len` doubles (may be null when len is 0);
 * `dim` must be writable.
 */
enum KseStatus kse_certificate_p(const struct KseCertificate *cert,
                                 double *buf,
                                 size_t len,
                                 size_t *dim);

/**
 * # Safety
 * `cert` must be a handle returned by this library that is not used again, or null.
 */
void kse_certificate_free(struct KseCertificate *cert);

/**
 * Simulates the closed loop. `simulation_json` uses the `simulation` section
 * of the job configuration (fields m, horizon, step, record_every, initial,
 * disturbance, noise, gamma); null means M = 60 with every input zero.
 *
 * # Safety
 * As for `kse_stab_check`; `simulation_json` must be NUL-terminated or null.
 */
enum KseStatus kse_simulate(const struct KsePlant *plant,
                            const double *k0,
                            size_t k0_len,
                            const double *l0,
                            size_t l0_len,
                            size_t n,
                            const char *simulation_json,
                            struct KseTrajectory **out);

/**
 * # Safety
 * `traj` must be live; `out` must be writable.
 */
enum KseStatus kse_trajectory_len(const struct KseTrajectory *traj, size_t *out);

/**
 * Copies a named channel (t, u, v, zeta, normL2_w, normH1_w, normH2_w,
 * normH1_z, V, J) into `buf`; KSE_STATUS_BUFFER_TOO_SMALL if len is short.
 *
 * # Safety
 * `traj` must be live; `name` NUL-terminated; `buf` must hold `len` doubles.
 */
enum KseStatus kse_trajectory_column(const struct KseTrajectory *traj,
                                     const char *name,
                                     double *buf,
                                     size_t len);

/**
 * # Safety
 * `traj` must be a handle returned by this library that is not used again, or null.
 */
void kse_trajectory_free(struct KseTrajectory *traj);

/**
 * Runs a full job from its JSON text, writing artifacts under `outdir`
 * (null: the config's own or the default). `exit_code` (nullable) receives
 * the command-line exit status of the job.
 *
 * # Safety
 * `json` must be NUL-terminated; `outdir` NUL-terminated or null; `exit_code`
 * writable or null.
 */
enum KseStatus kse_run_config_json(const char *json, const char *outdir, int *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KSE_SYNTH_H */

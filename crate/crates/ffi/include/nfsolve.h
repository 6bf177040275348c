#ifndef NFSOLVE_H
#define NFSOLVE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NfsStatus {
  NFS_STATUS_OK = 0,
  NFS_STATUS_NULL_POINTER = 1,
  NFS_STATUS_INVALID_ARGUMENT = 2,
  // A solvability or admissibility condition failed.
  NFS_STATUS_CONDITION_FAILED = 3,
  NFS_STATUS_NON_CONVERGENCE = 4,
  NFS_STATUS_CONFIG = 5,
  NFS_STATUS_IO = 6,
  NFS_STATUS_PANIC = 7,
} NfsStatus;

typedef enum NfsRule {
  NFS_RULE_TRAPEZOID = 0,
  NFS_RULE_MIDPOINT = 1,
} NfsRule;

typedef struct NfsGrid NfsGrid;

typedef struct NfsPotential NfsPotential;

typedef struct NfsReport NfsReport;

typedef struct NfsSpectrum NfsSpectrum;

typedef struct NfsState NfsState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call.
const char *nfs_last_error(void);

// # Safety
// `grid` must be a valid pointer to writable storage for one handle.
enum NfsStatus nfs_grid_new(uintptr_t dim,
                            double extent,
                            uintptr_t points_per_axis,
                            enum NfsRule rule,
                            struct NfsGrid **grid);

// Number of grid nodes, or 0 for a null handle.
//
// # Safety
// `grid` must be null or a handle from [`nfs_grid_new`].
uintptr_t nfs_grid_len(const struct NfsGrid *grid);

// # Safety
// `grid` must be null or a handle from [`nfs_grid_new`] not yet freed.
void nfs_grid_free(struct NfsGrid *grid);

// Parses a potential such as `{"family":"gaussian","params":{"beta":1,"c":1}}`.
//
// # Safety
// `json` must be a NUL-terminated string; `potential` must be writable.
enum NfsStatus nfs_potential_from_json(const char *json, struct NfsPotential **potential);

// # Safety
// `potential` must be null or a live handle.
void nfs_potential_free(struct NfsPotential *potential);

// Uniform bound on the sup-norm operator norm of the Lippmann-Schwinger
// operator.
//
// # Safety
// `potential` must be a live handle and `bound` writable.
enum NfsStatus nfs_q_norm_bound(const struct NfsPotential *potential, double *bound);

// Scattering state at wavevector `k` on a three-dimensional grid.
//
// # Safety
// `potential` and `grid` must be live handles, `k` must point to three
// values and `state` must be writable.
enum NfsStatus nfs_scattering_state(const struct NfsPotential *potential,
                                    const struct NfsGrid *grid,
                                    const double *k,
                                    double tol,
                                    uintptr_t max_iter,
                                    struct NfsState **state);

// Number of complex values held by the state, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
uintptr_t nfs_state_len(const struct NfsState *state);

// # Safety
// `state` must be null or a live handle.
uintptr_t nfs_state_iterations(const struct NfsState *state);

// Copies the state as interleaved (re, im) pairs into `buffer`, which must
// hold `2 * nfs_state_len(state)` doubles.
//
// # Safety
// `state` must be a live handle and `buffer` must have room for `len` doubles.
enum NfsStatus nfs_state_values(const struct NfsState *state, double *buffer, uintptr_t len);

// # Safety
// `state` must be null or a live handle.
void nfs_state_free(struct NfsState *state);

// Discrete spectrum below V+ of a one- or two-dimensional transverse
// operator on a midpoint grid. A nonpositive `extent` picks the box from
// the decay of the potential.
//
// # Safety
// `potential` must be a live handle and `spectrum` writable.
enum NfsStatus nfs_spectrum(const struct NfsPotential *potential,
                            uintptr_t dim,
                            double extent,
                            uintptr_t points_per_axis,
                            double zero_tol,
                            struct NfsSpectrum **spectrum);

// Number of distinct levels below V+, or 0 for a null handle.
//
// # Safety
// `spectrum` must be null or a live handle.
uintptr_t nfs_spectrum_levels(const struct NfsSpectrum *spectrum);

// Eigenvalue and multiplicity of level `j`.
//
// # Safety
// `spectrum` must be a live handle; `value` and `multiplicity` writable.
enum NfsStatus nfs_spectrum_level(const struct NfsSpectrum *spectrum,
                                  uintptr_t j,
                                  double *value,
                                  uintptr_t *multiplicity);

// # Safety
// `spectrum` must be null or a live handle.
void nfs_spectrum_free(struct NfsSpectrum *spectrum);

// Runs the pipeline described by a JSON run configuration, which must set
// `command`. A pipeline that finishes with a failed condition still returns
// NFS_STATUS_OK; its exit code is available from [`nfs_report_exit_code`].
//
// # Safety
// `config_json` must be a NUL-terminated string and `report` writable.
enum NfsStatus nfs_run(const char *config_json, struct NfsReport **report);

// The report as JSON, owned by the handle.
//
// # Safety
// `report` must be null or a live handle.
const char *nfs_report_json(const struct NfsReport *report);

// 0 pass, 2 condition failure; -1 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
int32_t nfs_report_exit_code(const struct NfsReport *report);

// # Safety
// `report` must be null or a live handle.
void nfs_report_free(struct NfsReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NFSOLVE_H */

#ifndef ERGODIC_CAT_H
#define ERGODIC_CAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EcStatus {
  EC_STATUS_OK = 0,
  EC_STATUS_NULL_POINTER = 1,
  EC_STATUS_INVALID_ARGUMENT = 2,
  EC_STATUS_NUMERICAL = 3,
  EC_STATUS_IO = 4,
  EC_STATUS_PANIC = 5,
} EcStatus;

/**
 * Opaque eigendecomposition handle.
 */
typedef struct EcSpectrum EcSpectrum;

/**
 * Ensemble prediction for one pair of observables.
 */
typedef struct EcMoment {
  double mean_a;
  double mean_b;
  double second_moment;
  double connected;
} EcMoment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length including the NUL,
 * or 0 if there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ec_last_error_message(char *buf, size_t len);

/**
 * Diagonalize a Hermitian matrix. Free the handle with [`ec_spectrum_free`].
 *
 * # Safety
 * `matrix` must hold `2 * dim * dim` doubles; `out` must be a valid pointer.
 */
enum EcStatus ec_spectrum_new(const double *matrix, size_t dim, struct EcSpectrum **out);

/**
 * # Safety
 * `spectrum` must come from [`ec_spectrum_new`] and not be used afterwards.
 */
void ec_spectrum_free(struct EcSpectrum *spectrum);

/**
 * # Safety
 * `spectrum` must be a live handle or null.
 */
size_t ec_spectrum_dim(const struct EcSpectrum *spectrum);

/**
 * Ascending eigenvalues into `out` (`dim` doubles).
 *
 * # Safety
 * `spectrum` must be a live handle; `out` valid for `len` doubles.
 */
enum EcStatus ec_spectrum_energies(const struct EcSpectrum *spectrum, double *out, size_t len);

/**
 * Eigenvector `k` as `2 * dim` interleaved doubles.
 *
 * # Safety
 * `spectrum` must be a live handle; `out` valid for `len` doubles.
 */
enum EcStatus ec_spectrum_eigenvector(const struct EcSpectrum *spectrum,
                                      size_t k,
                                      double *out,
                                      size_t len);

/**
 * Mean adjacent-gap ratio of a sorted spectrum.
 *
 * # Safety
 * `energies` valid for `n` doubles; `out` a valid pointer.
 */
enum EcStatus ec_level_spacing_ratio(const double *energies, size_t n, double *out);

/**
 * Ensemble mean of `rho` for contiguous sectors of sizes `degeneracies`,
 * written to `out` (`2 * dim * dim` doubles). All matrices are in the
 * energy eigenbasis.
 *
 * # Safety
 * Pointer lengths as described above.
 */
enum EcStatus ec_ensemble_mean(const double *rho,
                               size_t dim,
                               const size_t *degeneracies,
                               size_t n_sectors,
                               double *out);

/**
 * First and second ensemble moments of observables `a`, `b`.
 *
 * # Safety
 * `rho`, `a`, `b` hold `2 * dim * dim` doubles; `degeneracies` holds
 * `n_sectors` entries; `out` is a valid pointer.
 */
enum EcStatus ec_second_moment(const double *rho,
                               const double *a,
                               const double *b,
                               size_t dim,
                               const size_t *degeneracies,
                               size_t n_sectors,
                               struct EcMoment *out);

/**
 * Run the experiment described by `config_json`, writing outputs to
 * `out_dir`. On success `*report_json` receives the report, to be released
 * with [`ec_string_free`].
 *
 * # Safety
 * `config_json`, `out_dir` are NUL-terminated strings; `report_json` is a
 * valid pointer or null.
 */
enum EcStatus ec_run_experiment(const char *config_json, const char *out_dir, char **report_json);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void ec_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ERGODIC_CAT_H */

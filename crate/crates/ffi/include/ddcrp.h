#ifndef DDCRP_H
#define DDCRP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of an FFI call. Values other than `Ok` leave outputs untouched.
typedef enum DdcrpStatus {
  DDCRP_STATUS_OK = 0,
  DDCRP_STATUS_NULL_POINTER = 1,
  DDCRP_STATUS_INVALID_UTF8 = 2,
  // Chain, sample or cluster index out of range.
  DDCRP_STATUS_OUT_OF_RANGE = 3,
  // The caller's buffer is shorter than the data.
  DDCRP_STATUS_BUFFER_TOO_SMALL = 4,
  DDCRP_STATUS_INVALID_INPUT = 10,
  DDCRP_STATUS_CONFIG = 11,
  DDCRP_STATUS_DATA = 12,
  DDCRP_STATUS_UNSUPPORTED = 13,
  DDCRP_STATUS_UNDEFINED_STATISTIC = 14,
  DDCRP_STATUS_NUMERIC = 15,
  DDCRP_STATUS_IO = 16,
  // The engine panicked; the handle arguments are still valid.
  DDCRP_STATUS_PANIC = 99,
} DdcrpStatus;

// A completed fit: dataset, per-chain traces and summary report.
typedef struct DdcrpFit DdcrpFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *ddcrp_last_error(void);

// Library version as a static NUL-terminated string.
const char *ddcrp_version(void);

// Fit the run described by the TOML document `config`.
//
// # Safety
// `config` must be a NUL-terminated string and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_from_toml(const char *config, struct DdcrpFit **out);

// Fit a bundled preset (`poisson-overlapping` or `old-faithful`). A
// non-zero `iterations` replaces the preset's schedule together with
// `burn_in`; zero keeps the preset schedule.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_preset(const char *name,
                                  size_t iterations,
                                  size_t burn_in,
                                  struct DdcrpFit **out);

// Release a fit handle. Null is ignored.
//
// # Safety
// `fit` must come from this library and not be used afterwards.
void ddcrp_fit_free(struct DdcrpFit *fit);

// Number of observations.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_num_observations(const struct DdcrpFit *fit, size_t *out);

// Number of chains.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_num_chains(const struct DdcrpFit *fit, size_t *out);

// Number of retained samples in `chain_index`.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_num_samples(const struct DdcrpFit *fit, size_t chain_index, size_t *out);

// Copy the cluster-count series of a chain into `buf` (`len` entries).
//
// # Safety
// `buf` must hold `len` writable `size_t` values.
enum DdcrpStatus ddcrp_fit_k_series(const struct DdcrpFit *fit,
                                    size_t chain_index,
                                    size_t *buf,
                                    size_t len);

// Copy the log-posterior series of a chain into `buf` (`len` entries).
//
// # Safety
// `buf` must hold `len` writable doubles.
enum DdcrpStatus ddcrp_fit_log_post_series(const struct DdcrpFit *fit,
                                           size_t chain_index,
                                           double *buf,
                                           size_t len);

// Copy the link vector of one retained sample into `buf` (`len` >= n).
//
// # Safety
// `buf` must hold `len` writable `size_t` values.
enum DdcrpStatus ddcrp_fit_assignments(const struct DdcrpFit *fit,
                                       size_t chain_index,
                                       size_t sample,
                                       size_t *buf,
                                       size_t len);

// Posterior mode of the cluster count, pooled over chains.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_k_mode(const struct DdcrpFit *fit, size_t *out);

// Pooled posterior probability that the cluster count equals `k`.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_k_probability(const struct DdcrpFit *fit, size_t k, double *out);

// The run report as a newly allocated JSON string; release it with
// [`ddcrp_string_free`].
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum DdcrpStatus ddcrp_fit_report_json(const struct DdcrpFit *fit, char **out);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void ddcrp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDCRP_H */

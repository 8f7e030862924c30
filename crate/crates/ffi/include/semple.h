#ifndef SEMPLE_H
#define SEMPLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum SempleStatus {
  SEMPLE_STATUS_OK = 0,
  SEMPLE_STATUS_NULL_POINTER = 1,
  SEMPLE_STATUS_INVALID_ARGUMENT = 2,
  SEMPLE_STATUS_DIMENSION_MISMATCH = 3,
  SEMPLE_STATUS_NUMERICAL = 4,
  SEMPLE_STATUS_UNKNOWN_TASK = 5,
  SEMPLE_STATUS_MISSING_EXACT_LIKELIHOOD = 6,
  SEMPLE_STATUS_SIMULATION = 7,
  SEMPLE_STATUS_FORMAT = 8,
  SEMPLE_STATUS_IO = 9,
  SEMPLE_STATUS_BUFFER_TOO_SMALL = 10,
  SEMPLE_STATUS_PANIC = 11,
} SempleStatus;

// A fitted GLLiM model, kept in both parameterizations.
typedef struct SempleGllim SempleGllim;

// A sample matrix returned by a run.
typedef struct SempleSamples SempleSamples;

// A simulator bundle.
typedef struct SempleTask SempleTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread. The pointer stays valid until
// the next failing call on the same thread.
const char *semple_last_error_message(void);

// Library version as a static string.
const char *semple_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void semple_string_free(char *s);

// Number of free parameters of a GLLiM model; 0 if any size is 0.
size_t semple_param_count(size_t k, size_t d, size_t l, int isotropic);

// Looks a task up by name.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum SempleStatus semple_task_new(const char *name, struct SempleTask **out);

// Lotka-Volterra with the summary scaler given as CSV text.
//
// # Safety
// `scaler_csv` must be a NUL-terminated string and `out` a valid pointer.
enum SempleStatus semple_task_new_lotka_volterra(const char *scaler_csv, struct SempleTask **out);

// # Safety
// `task` must come from a `semple_task_new*` call and not have been freed.
void semple_task_free(struct SempleTask *task);

// Parameter and data dimensions.
//
// # Safety
// All pointers must be valid.
enum SempleStatus semple_task_dims(const struct SempleTask *task, size_t *l, size_t *d);

// Writes `n` prior draws (`n x l`, row-major) into `out`.
//
// # Safety
// `out` must hold `out_len` doubles.
enum SempleStatus semple_task_sample_prior(const struct SempleTask *task,
                                           size_t n,
                                           uint64_t seed,
                                           double *out,
                                           size_t out_len);

// Runs the simulator `n` times at `theta`; writes `n x d` values.
//
// # Safety
// `theta` must hold `l` doubles and `out` must hold `out_len` doubles.
enum SempleStatus semple_task_simulate(const struct SempleTask *task,
                                       const double *theta,
                                       size_t l,
                                       size_t n,
                                       uint64_t seed,
                                       double *out,
                                       size_t out_len);

// Exact log-likelihood `log p(y | theta)`.
//
// # Safety
// `y` must hold `d` doubles, `theta` `l` doubles, `out` must be valid.
enum SempleStatus semple_task_loglik(const struct SempleTask *task,
                                     const double *y,
                                     size_t d,
                                     const double *theta,
                                     size_t l,
                                     double *out);

// Runs the sequential algorithm on `y_o` and returns the final-round draws.
// `config` is key = value text; pass null for the defaults.
//
// # Safety
// `y_o` must hold `d` doubles; `config` must be null or NUL-terminated.
enum SempleStatus semple_run(const struct SempleTask *task,
                             const double *y_o,
                             size_t d,
                             const char *config,
                             struct SempleSamples **out);

// # Safety
// All pointers must be valid.
enum SempleStatus semple_samples_shape(const struct SempleSamples *s, size_t *rows, size_t *cols);

// Copies the samples, row-major, into `out`.
//
// # Safety
// `out` must hold `out_len` doubles.
enum SempleStatus semple_samples_copy(const struct SempleSamples *s, double *out, size_t out_len);

// # Safety
// `s` must come from this library and not have been freed.
void semple_samples_free(struct SempleSamples *s);

// Fits a `k`-component model by EM on `n` pairs. `isotropic` selects the
// noise covariance structure.
//
// # Safety
// `thetas` must hold `n * l` doubles and `ys` `n * d` doubles.
enum SempleStatus semple_gllim_fit(const double *thetas,
                                   const double *ys,
                                   size_t n,
                                   size_t l,
                                   size_t d,
                                   size_t k,
                                   int isotropic,
                                   uint64_t seed,
                                   struct SempleGllim **out);

// Parses a model in the text format written by [`semple_gllim_to_text`].
//
// # Safety
// `text` must be NUL-terminated and `out` valid.
enum SempleStatus semple_gllim_from_text(const char *text, struct SempleGllim **out);

// Serializes the model. Release the string with [`semple_string_free`].
//
// # Safety
// `g` and `out` must be valid.
enum SempleStatus semple_gllim_to_text(const struct SempleGllim *g, char **out);

// # Safety
// `g` must come from this library and not have been freed.
void semple_gllim_free(struct SempleGllim *g);

// Number of components, parameter and data dimensions.
//
// # Safety
// All pointers must be valid.
enum SempleStatus semple_gllim_shape(const struct SempleGllim *g, size_t *k, size_t *l, size_t *d);

// Drops components with weight below `threshold` and renormalizes, in place.
//
// # Safety
// `g` must be valid.
enum SempleStatus semple_gllim_prune(struct SempleGllim *g, double threshold);

// Surrogate log-likelihood `log q(y | theta)`.
//
// # Safety
// `y` must hold `d` doubles, `theta` `l` doubles.
enum SempleStatus semple_gllim_loglik(const struct SempleGllim *g,
                                      const double *y,
                                      size_t d,
                                      const double *theta,
                                      size_t l,
                                      double *out);

// Surrogate posterior log-density `log q(theta | y)`.
//
// # Safety
// `theta` must hold `l` doubles, `y` `d` doubles.
enum SempleStatus semple_gllim_posterior_logpdf(const struct SempleGllim *g,
                                                const double *theta,
                                                size_t l,
                                                const double *y,
                                                size_t d,
                                                double *out);

// Draws `n` rows from the surrogate posterior at `y` with covariances
// inflated by `gamma`.
//
// # Safety
// `y` must hold `d` doubles and `out` `out_len` doubles.
enum SempleStatus semple_gllim_sample_posterior(const struct SempleGllim *g,
                                                const double *y,
                                                size_t d,
                                                size_t n,
                                                double gamma,
                                                uint64_t seed,
                                                double *out,
                                                size_t out_len);

// Classifier two-sample test accuracy between `a` (`na x dim`) and `b`.
//
// # Safety
// `a` and `b` must hold `na * dim` and `nb * dim` doubles.
enum SempleStatus semple_c2st(const double *a,
                              size_t na,
                              const double *b,
                              size_t nb,
                              size_t dim,
                              uint64_t seed,
                              double *out);

// Subsampled 2-Wasserstein distance. `subsample` and `repeats` of 0 pick
// the defaults (500, capped by the sample sizes, and 5).
//
// # Safety
// `a` and `b` must hold `na * dim` and `nb * dim` doubles.
enum SempleStatus semple_w2(const double *a,
                            size_t na,
                            const double *b,
                            size_t nb,
                            size_t dim,
                            size_t subsample,
                            size_t repeats,
                            uint64_t seed,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMPLE_H */

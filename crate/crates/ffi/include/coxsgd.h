#ifndef COXSGD_H
#define COXSGD_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum CoxsgdStatus {
  COXSGD_STATUS_OK = 0,
  COXSGD_STATUS_NULL_POINTER = 1,
  COXSGD_STATUS_INVALID_UTF8 = 2,
  COXSGD_STATUS_IO = 3,
  COXSGD_STATUS_PARSE = 4,
  COXSGD_STATUS_INVALID_CONFIG = 5,
  COXSGD_STATUS_NUMERIC = 6,
  COXSGD_STATUS_PANIC = 7,
} CoxsgdStatus;

// Opaque dataset handle.
typedef struct CoxsgdDataset CoxsgdDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *coxsgd_last_error(void);

// Library version as a static string.
const char *coxsgd_version(void);

// Read a dataset from the CSV format (`x1,...,xp,time,event`).
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid
// pointer; the returned handle must be released with
// [`coxsgd_dataset_free`].
enum CoxsgdStatus coxsgd_dataset_from_csv(const char *path, struct CoxsgdDataset **out);

// Simulate `n` records from a JSON data-generating spec.
//
// # Safety
// `spec_json` must be a valid NUL-terminated string and `out` a valid
// pointer; the returned handle must be released with
// [`coxsgd_dataset_free`].
enum CoxsgdStatus coxsgd_dataset_simulate(const char *spec_json,
                                          size_t n,
                                          uint64_t seed,
                                          struct CoxsgdDataset **out);

// Release a dataset handle. Passing NULL is a no-op.
//
// # Safety
// `ptr` must be a handle returned by this library, released once.
void coxsgd_dataset_free(struct CoxsgdDataset *ptr);

// Number of records.
//
// # Safety
// `ptr` must be a valid dataset handle.
size_t coxsgd_dataset_len(const struct CoxsgdDataset *ptr);

// Covariate dimension.
//
// # Safety
// `ptr` must be a valid dataset handle.
size_t coxsgd_dataset_dim(const struct CoxsgdDataset *ptr);

// Number of records with an observed event.
//
// # Safety
// `ptr` must be a valid dataset handle.
size_t coxsgd_dataset_n_events(const struct CoxsgdDataset *ptr);

// Write the dataset in the CSV format.
//
// # Safety
// `ptr` must be a valid dataset handle and `path` a valid
// NUL-terminated string.
enum CoxsgdStatus coxsgd_dataset_to_csv(const struct CoxsgdDataset *ptr, const char *path);

// Full-sample negative log-partial likelihood of a linear model.
//
// # Safety
// `ptr` must be a valid dataset handle, `theta` an array of `p`
// doubles, `out` a valid pointer.
enum CoxsgdStatus coxsgd_full_loss(const struct CoxsgdDataset *ptr,
                                   const double *theta,
                                   size_t p,
                                   double *out);

// Mini-batch gradient of the within-batch loss for a linear model.
// `indices` are record indices forming the batch; `out_grad` receives
// `p` doubles.
//
// # Safety
// Pointers must be valid for the lengths given.
enum CoxsgdStatus coxsgd_batch_gradient(const struct CoxsgdDataset *ptr,
                                        const size_t *indices,
                                        size_t s,
                                        const double *theta,
                                        size_t p,
                                        double *out_grad);

// Fit a linear Cox model by projected SGD. `config_json` example:
// `{"sampler":{"strategy":"SB","s":64,"seed":1},
//   "schedule":{"kind":"EpochPolynomial","c":4.0},
//   "epochs":100,"projection_radius":1e6}`.
// `out_theta` receives `p` doubles.
//
// # Safety
// Pointers must be valid for the lengths given.
enum CoxsgdStatus coxsgd_fit_linear_sgd(const struct CoxsgdDataset *ptr,
                                        const char *config_json,
                                        double *out_theta,
                                        size_t p);

// Solve the fixed-batch objective exactly: build the seeded FB
// partition with batch size `s` and run Newton on the summed
// per-stratum loss. `out_theta` receives `p` doubles.
//
// # Safety
// Pointers must be valid for the lengths given.
enum CoxsgdStatus coxsgd_strata_newton(const struct CoxsgdDataset *ptr,
                                       size_t s,
                                       uint64_t seed,
                                       double *out_theta,
                                       size_t p);

// Full-sample Cox maximum likelihood by Newton. `out_theta` receives
// `p` doubles.
//
// # Safety
// Pointers must be valid for the lengths given.
enum CoxsgdStatus coxsgd_full_mle(const struct CoxsgdDataset *ptr, double *out_theta, size_t p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COXSGD_H */

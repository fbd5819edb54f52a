#ifndef ROBUST_ENSEMBLE_H
#define ROBUST_ENSEMBLE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum ReStatus {
  RE_STATUS_OK = 0,
  RE_STATUS_NULL_POINTER = 1,
  RE_STATUS_INVALID_UTF8 = 2,
  // Bad argument or input data (shape, range, config contents).
  RE_STATUS_INVALID = 3,
  // A file could not be read or parsed.
  RE_STATUS_IO = 4,
  // The computation itself failed.
  RE_STATUS_RUNTIME = 5,
  RE_STATUS_PANIC = 6,
} ReStatus;

// Opaque model handle: detectors, assignor, paraphraser and inference
// settings.
typedef struct ReModel ReModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a
// successful call. The pointer stays valid until the next call into this
// library on the same thread.
const char *re_last_error(void);

// Library version as a static NUL-terminated string.
const char *re_version(void);

// Uniform mean of a row-major `rows x cols` probability matrix
// (detectors by samples).
//
// # Safety
// `probabilities` must point to `rows * cols` readable doubles and `out`
// must be writable.
enum ReStatus re_aggregate_uniform(const double *probabilities,
                                   size_t rows,
                                   size_t cols,
                                   double *out);

// Weighted mean of a probability matrix with a non-negative weight matrix
// of the same shape. Weights need not be normalized.
//
// # Safety
// Both matrices must point to `rows * cols` readable doubles and `out`
// must be writable.
enum ReStatus re_aggregate_weighted(const double *probabilities,
                                    const double *weights,
                                    size_t rows,
                                    size_t cols,
                                    double *out);

// Label for an aggregated probability: 1 (harmful) when `p_bar > epsilon`,
// else 0.
//
// # Safety
// `out_label` must be writable.
enum ReStatus re_classify(double p_bar, double epsilon, uint8_t *out_label);

// Lower bound on the probability of a correct decision for one detector
// with prediction variance `sigma0_sq`, `generated` paraphrases plus the
// original input, and margin `delta`.
//
// # Safety
// `out` must be writable.
enum ReStatus re_single_bound(double sigma0_sq, size_t generated, double delta, double *out);

// Ensemble counterpart of [`re_single_bound`] for `detectors` variances.
//
// # Safety
// `sigma_sq` must point to `detectors` readable doubles and `out` must be
// writable.
enum ReStatus re_ensemble_bound(const double *sigma_sq,
                                size_t detectors,
                                size_t generated,
                                double delta,
                                double *out);

// KL divergence between two log-normals given by the mean and variance of
// their underlying Gaussians.
//
// # Safety
// `out` must be writable.
enum ReStatus re_kl_lognormal(double q_mean,
                              double q_variance,
                              double p_mean,
                              double p_variance,
                              double *out);

// Loads a trained checkpoint directory. `config_path` names a JSON run
// configuration and may be NULL for defaults.
//
// # Safety
// `checkpoint_dir` must be a NUL-terminated string, `config_path` NULL or
// NUL-terminated, and `out` writable. The handle written to `out` must be
// released with [`re_model_free`].
enum ReStatus re_model_open(const char *checkpoint_dir,
                            const char *config_path,
                            struct ReModel **out);

// Creates an untrained model with `detectors` zero-weight detectors. Its
// every prediction is 0.5.
//
// # Safety
// `config_path` must be NULL or NUL-terminated and `out` writable.
enum ReStatus re_model_init(size_t detectors, const char *config_path, struct ReModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle from this library not yet freed.
void re_model_free(struct ReModel *model);

// Number of base detectors in the model, 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t re_model_detectors(const struct ReModel *model);

// Scores `text`: the aggregated harmful probability and its label.
//
// # Safety
// `model` must be a live handle, `text` NUL-terminated, and both out
// pointers writable.
enum ReStatus re_model_predict(const struct ReModel *model,
                               const char *text,
                               double *out_probability,
                               uint8_t *out_label);

// Full verdict for `text` as a JSON object, the same shape the `predict`
// command prints. Free the string with [`re_string_free`].
//
// # Safety
// `model` must be a live handle, `text` NUL-terminated and `out` writable.
enum ReStatus re_model_predict_json(const struct ReModel *model, const char *text, char **out);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string from this library not yet freed.
void re_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBUST_ENSEMBLE_H */

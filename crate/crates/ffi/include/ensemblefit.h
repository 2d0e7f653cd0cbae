#ifndef ENSEMBLEFIT_H
#define ENSEMBLEFIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum EfStatus {
  EF_STATUS_OK = 0,
  EF_STATUS_NULL_POINTER = 1,
  EF_STATUS_INVALID_ARGUMENT = 2,
  EF_STATUS_IO = 3,
  EF_STATUS_FORMAT = 4,
  EF_STATUS_SHAPE = 5,
  EF_STATUS_PANIC = 6,
} EfStatus;

// A loaded ensemble with its combination mode and threshold.
typedef struct EfEnsemble EfEnsemble;

// A single trained network.
typedef struct EfModel EfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *ef_last_error(void);

void ef_clear_error(void);

// Library version as a static NUL-terminated string.
const char *ef_version(void);

// Loads a model file. On success `*out` owns a handle to free with
// [`ef_model_free`].
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum EfStatus ef_model_load(const char *path, struct EfModel **out);

// # Safety
// `model` must come from [`ef_model_load`] and not be used afterwards.
void ef_model_free(struct EfModel *model);

// Writes the expected `[channels, height, width]` into `out_shape[0..3]`.
//
// # Safety
// `model` must be a live handle and `out_shape` must hold three values.
enum EfStatus ef_model_input_shape(const struct EfModel *model, size_t *out_shape);

// Defect probabilities for `n_items` images stored contiguously in
// channel, row, column order.
//
// # Safety
// `pixels` must hold `n_items * c * h * w` values and `out_probs` `n_items`.
enum EfStatus ef_model_predict(const struct EfModel *model,
                               const double *pixels,
                               size_t n_items,
                               double *out_probs);

// Loads an ensemble manifest and its member models.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum EfStatus ef_ensemble_load(const char *path, struct EfEnsemble **out);

// # Safety
// `ensemble` must come from [`ef_ensemble_load`] and not be used afterwards.
void ef_ensemble_free(struct EfEnsemble *ensemble);

// Number of members, or zero for a null handle.
//
// # Safety
// `ensemble` must be null or a live handle.
size_t ef_ensemble_len(const struct EfEnsemble *ensemble);

// # Safety
// `ensemble` must be a live handle and `out_shape` must hold three values.
enum EfStatus ef_ensemble_input_shape(const struct EfEnsemble *ensemble, size_t *out_shape);

// Combined defect probabilities under the ensemble's mode.
//
// # Safety
// Same layout rules as [`ef_model_predict`].
enum EfStatus ef_ensemble_predict(const struct EfEnsemble *ensemble,
                                  const double *pixels,
                                  size_t n_items,
                                  double *out_probs);

// Decision threshold stored with the ensemble.
//
// # Safety
// `ensemble` must be a live handle and `out` writable.
enum EfStatus ef_ensemble_threshold(const struct EfEnsemble *ensemble, double *out);

// Normalized inverse-loss weights.
//
// # Safety
// `losses` and `out_weights` must each hold `n` values.
enum EfStatus ef_reciprocal_weights(const double *losses, size_t n, double *out_weights);

// First epoch after which `window` successive validation-loss changes stay
// within `epsilon`; `*out_epoch` is -1 when the curve never settles.
//
// # Safety
// `val_losses` must hold `n` values and `out_epoch` be writable.
enum EfStatus ef_first_stable_epoch(const double *val_losses,
                                    size_t n,
                                    double epsilon,
                                    size_t window,
                                    int64_t *out_epoch);

// Largest validation-loss change over the last `tail` epoch transitions.
//
// # Safety
// `val_losses` must hold `n` values and `out` be writable.
enum EfStatus ef_empirical_epsilon(const double *val_losses, size_t n, size_t tail, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENSEMBLEFIT_H */

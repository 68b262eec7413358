#ifndef REDSLDS_H
#define REDSLDS_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum RedsldsStatus {
  REDSLDS_STATUS_OK = 0,
  REDSLDS_STATUS_NULL_POINTER = 1,
  REDSLDS_STATUS_INVALID_ARGUMENT = 2,
  REDSLDS_STATUS_CONFIG = 3,
  REDSLDS_STATUS_DATA = 4,
  REDSLDS_STATUS_NUMERICAL = 5,
  REDSLDS_STATUS_IO = 6,
  REDSLDS_STATUS_PANIC = 7,
} RedsldsStatus;

/*
 Initialization scheme of a chain.
 */
typedef enum RedsldsScheme {
  /*
   ARHMM start plus parameter-only sweeps.
   */
  REDSLDS_SCHEME_I = 0,
  /*
   ARHMM start only.
   */
  REDSLDS_SCHEME_II = 1,
} RedsldsScheme;

/*
 A Gibbs chain bound to a copy of its data.
 */
typedef struct RedsldsChain RedsldsChain;

/*
 A collection of observation sequences of equal dimension.
 */
typedef struct RedsldsDataset RedsldsDataset;

/*
 A model configuration with its parameters.
 */
typedef struct RedsldsModel RedsldsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *redslds_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *redslds_version(void);

/*
 Release a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void redslds_string_free(char *s);

/*
 Parse a model document (configuration plus parameters) from JSON.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum RedsldsStatus redslds_model_from_json(const char *json, struct RedsldsModel **out);

/*
 Serialize a model document to JSON.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum RedsldsStatus redslds_model_to_json(const struct RedsldsModel *model, char **out);

/*
 # Safety
 `model` must be NULL or a live handle; it is invalid afterwards.
 */
void redslds_model_free(struct RedsldsModel *model);

/*
 Number of modes, latent dimension, observation dimension and maximum
 duration of a model. Any output may be NULL.

 # Safety
 `model` must be a live handle; non-NULL outputs must be valid.
 */
enum RedsldsStatus redslds_model_dims(const struct RedsldsModel *model,
                                      size_t *num_modes,
                                      size_t *latent_dim,
                                      size_t *obs_dim,
                                      size_t *max_duration);

/*
 Draw a sequence of length `len` from the model. `y` receives `len × N`
 values row by row; `x` (`len × M`), `states` and `durations` (`len`
 each, durations 1-based) may be NULL.

 # Safety
 Buffers must hold the stated number of elements.
 */
enum RedsldsStatus redslds_model_simulate(const struct RedsldsModel *model,
                                          size_t len,
                                          uint64_t seed,
                                          double *y,
                                          double *x,
                                          size_t *states,
                                          size_t *durations);

/*
 `log p(y, x, s, d)` of one complete trajectory; `-inf` when the
 durations break the countdown.

 # Safety
 `y` holds `len × N`, `x` holds `len × M`, `states` and `durations` hold
 `len` elements; `out` must be valid.
 */
enum RedsldsStatus redslds_model_joint_log_density(const struct RedsldsModel *model,
                                                   size_t len,
                                                   const double *y,
                                                   const double *x,
                                                   const size_t *states,
                                                   const size_t *durations,
                                                   double *out);

/*
 Create an empty dataset.

 # Safety
 `out` must be a valid pointer.
 */
enum RedsldsStatus redslds_dataset_new(struct RedsldsDataset **out);

/*
 Append a `len × obs_dim` row-major sequence.

 # Safety
 `dataset` must be a live handle and `y` hold `len × obs_dim` values.
 */
enum RedsldsStatus redslds_dataset_push(struct RedsldsDataset *dataset,
                                        const double *y,
                                        size_t len,
                                        size_t obs_dim);

/*
 Number of sequences held.

 # Safety
 `dataset` must be a live handle.
 */
size_t redslds_dataset_len(const struct RedsldsDataset *dataset);

/*
 # Safety
 `dataset` must be NULL or a live handle; it is invalid afterwards.
 */
void redslds_dataset_free(struct RedsldsDataset *dataset);

/*
 Initialize a chain on a copy of `dataset`. `model_json` is a model block
 (`variant`, `num_modes`, `latent_dim`, optional `max_duration` and
 `shared_emission`); `prior_json` is a prior block or NULL for defaults.

 # Safety
 Strings must be NUL-terminated, handles live, `out` valid.
 */
enum RedsldsStatus redslds_chain_new(const struct RedsldsDataset *dataset,
                                     const char *model_json,
                                     const char *prior_json,
                                     size_t iterations,
                                     double burn_in_fraction,
                                     enum RedsldsScheme scheme,
                                     uint64_t seed,
                                     struct RedsldsChain **out);

/*
 Restore a chain from checkpoint JSON; `dataset` must be the data it was
 started on.

 # Safety
 As for [`redslds_chain_new`].
 */
enum RedsldsStatus redslds_chain_from_json(const struct RedsldsDataset *dataset,
                                           const char *json,
                                           struct RedsldsChain **out);

/*
 Serialize the full chain state as checkpoint JSON.

 # Safety
 `chain` must be live and `out` valid.
 */
enum RedsldsStatus redslds_chain_to_json(const struct RedsldsChain *chain, char **out);

/*
 Run `sweeps` Gibbs sweeps. On failure the chain keeps its last good state.

 # Safety
 `chain` must be a live handle.
 */
enum RedsldsStatus redslds_chain_step(struct RedsldsChain *chain, size_t sweeps);

/*
 Sweeps completed so far.

 # Safety
 `chain` must be NULL or a live handle.
 */
size_t redslds_chain_iteration(const struct RedsldsChain *chain);

/*
 Joint log-density and evidence proxy after the last sweep.

 # Safety
 `chain` must be live; non-NULL outputs valid.
 */
enum RedsldsStatus redslds_chain_log_density(const struct RedsldsChain *chain,
                                             double *joint,
                                             double *evidence);

/*
 Copy the states of sequence `index` into `out` (`len` elements). With
 `majority` nonzero, the per-step majority over post-burn-in sweeps is
 returned instead of the current sample.

 # Safety
 `chain` must be live and `out` hold `len` elements.
 */
enum RedsldsStatus redslds_chain_states(const struct RedsldsChain *chain,
                                        size_t index,
                                        int32_t majority,
                                        size_t *out,
                                        size_t len);

/*
 Current parameters as a new model handle.

 # Safety
 `chain` must be live and `out` valid.
 */
enum RedsldsStatus redslds_chain_model(const struct RedsldsChain *chain, struct RedsldsModel **out);

/*
 # Safety
 `chain` must be NULL or a live handle; it is invalid afterwards.
 */
void redslds_chain_free(struct RedsldsChain *chain);

/*
 Segmentation scores of `pred` against `truth` after optimal relabelling.
 Any output may be NULL.

 # Safety
 `pred` and `truth` hold `len` elements; non-NULL outputs valid.
 */
enum RedsldsStatus redslds_score(const size_t *pred,
                                 const size_t *truth,
                                 size_t len,
                                 double *accuracy,
                                 double *weighted_f1,
                                 double *macro_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDSLDS_H */

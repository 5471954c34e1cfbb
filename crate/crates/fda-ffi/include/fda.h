#ifndef FDA_H
#define FDA_H

/* Generated by cbindgen from the fda-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes for every fallible entry point.
 */
typedef enum FdaStatus {
  FDA_STATUS_OK = 0,
  /**
   * A pointer argument was NULL.
   */
  FDA_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FDA_STATUS_INVALID_UTF8 = 2,
  /**
   * A configuration value or argument was rejected.
   */
  FDA_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Reading or writing files failed.
   */
  FDA_STATUS_IO = 4,
  /**
   * The dataset violated a structural invariant.
   */
  FDA_STATUS_INVALID_DATASET = 5,
  /**
   * Training produced a non-finite quantity.
   */
  FDA_STATUS_DIVERGED = 6,
  /**
   * A checkpoint was missing, corrupt, or mismatched.
   */
  FDA_STATUS_CHECKPOINT = 7,
  /**
   * An unexpected internal failure.
   */
  FDA_STATUS_INTERNAL = 8,
} FdaStatus;

/**
 * Opaque prepared-dataset handle.
 */
typedef struct FdaDataset FdaDataset;

/**
 * Opaque trained-model handle: scoring embeddings plus the backbone used
 * to produce them.
 */
typedef struct FdaModel FdaModel;

/**
 * Ranking and fairness metrics at one cutoff K.
 */
typedef struct FdaMetrics {
  double hit_ratio;
  double ndcg;
  double demographic_parity;
  double equal_opportunity;
} FdaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The last error message for this thread. Never NULL; empty when no error
 * has occurred. Valid until the next failing call on the same thread.
 */
const char *fda_last_error_message(void);

/**
 * The crate version as a static NUL-terminated string.
 */
const char *fda_version(void);

/**
 * Loads a prepared dataset directory (as written by `fda prepare`).
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum FdaStatus fda_dataset_load(const char *dir, struct FdaDataset **out);

/**
 * Generates the bundled synthetic corpus with planted group skew.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FdaStatus fda_dataset_synthetic(uint64_t seed, struct FdaDataset **out);

/**
 * Number of users in the dataset; 0 if the handle is NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
uintptr_t fda_dataset_num_users(const struct FdaDataset *ds);

/**
 * Number of items in the dataset; 0 if the handle is NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
uintptr_t fda_dataset_num_items(const struct FdaDataset *ds);

/**
 * Releases a dataset handle. NULL is a no-op.
 *
 * # Safety
 * `ds` must be NULL or a handle not freed before.
 */
void fda_dataset_free(struct FdaDataset *ds);

/**
 * Trains a model on a dataset.
 *
 * `config_json` is a flat JSON object of overrides over the defaults (the
 * same keys as the CLI config file), or NULL / "{}" for pure defaults.
 *
 * # Safety
 * `ds` must be a live dataset handle; `out` a valid pointer; `config_json`
 * NULL or a valid NUL-terminated string.
 */
enum FdaStatus fda_train(const struct FdaDataset *ds,
                         const char *config_json,
                         struct FdaModel **out);

/**
 * Loads the model stored in a checkpoint directory.
 *
 * # Safety
 * `dir` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum FdaStatus fda_model_load(const char *dir, struct FdaModel **out);

/**
 * Predicted preference score for one (user, item) pair.
 *
 * # Safety
 * `model` must be a live model handle and `out_score` a valid pointer.
 */
enum FdaStatus fda_model_score(const struct FdaModel *model,
                               uintptr_t user,
                               uintptr_t item,
                               double *out_score);

/**
 * Evaluates a model on a dataset at cutoff `k`.
 *
 * # Safety
 * `model` and `ds` must be live handles and `out_metrics` a valid pointer.
 */
enum FdaStatus fda_evaluate(const struct FdaModel *model,
                            const struct FdaDataset *ds,
                            uintptr_t k,
                            struct FdaMetrics *out_metrics);

/**
 * Releases a model handle. NULL is a no-op.
 *
 * # Safety
 * `model` must be NULL or a handle not freed before.
 */
void fda_model_free(struct FdaModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FDA_H */

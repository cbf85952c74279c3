#ifndef HANDA_H
#define HANDA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum HandaStatus {
  HANDA_STATUS_OK = 0,
  // Null pointer, bad UTF-8, bad size or a violated precondition.
  HANDA_STATUS_INVALID_ARGUMENT = 1,
  // Unreadable or malformed input data.
  HANDA_STATUS_DATA_ERROR = 2,
  // Training produced a non-finite value.
  HANDA_STATUS_NUMERIC_ERROR = 3,
  // Internal panic; the handle arguments should be considered unusable.
  HANDA_STATUS_PANIC = 4,
} HandaStatus;

// Training options.
typedef struct HandaConfig HandaConfig;

// A feature matrix with optional labels.
typedef struct HandaDataset HandaDataset;

// A source/target pair split into labeled, unlabeled and test target parts.
typedef struct HandaExperiment HandaExperiment;

// A trained model.
typedef struct HandaModel HandaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next failing call on the same thread.
const char *handa_last_error(void);

// Library version as a static NUL-terminated string.
const char *handa_version(void);

// Builds a dataset from `n` row-major samples of dimension `dim`. `labels`
// may be NULL for unlabeled data; otherwise it holds `n` class indices.
//
// # Safety
// `features` must point to `n * dim` doubles and `labels`, when non-NULL, to
// `n` values. `out` must be writable.
enum HandaStatus handa_dataset_new(const double *features,
                                   size_t n,
                                   size_t dim,
                                   const size_t *labels,
                                   struct HandaDataset **out);

// Loads a labeled dataset. `sparse` selects the "label idx:val" format;
// otherwise "label,f1,...,fm" CSV rows are expected.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum HandaStatus handa_dataset_load(const char *path, bool sparse, struct HandaDataset **out);

// Generates a synthetic heterogeneous pair. The remaining generator options
// keep their library defaults.
//
// # Safety
// `out_source` and `out_target` must be writable.
enum HandaStatus handa_dataset_synthetic(size_t classes,
                                         size_t m_s,
                                         size_t m_t,
                                         size_t n_per_class,
                                         uint64_t seed,
                                         struct HandaDataset **out_source,
                                         struct HandaDataset **out_target);

// Number of samples, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t handa_dataset_len(const struct HandaDataset *ds);

// Feature dimension, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live dataset handle.
size_t handa_dataset_dim(const struct HandaDataset *ds);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void handa_dataset_free(struct HandaDataset *ds);

// Default training options.
//
// # Safety
// `out` must be writable.
enum HandaStatus handa_config_new(struct HandaConfig **out);

// Options from TOML text; absent keys keep their defaults.
//
// # Safety
// `text` must be a NUL-terminated string and `out` writable.
enum HandaStatus handa_config_from_toml(const char *text, struct HandaConfig **out);

// # Safety
// `cfg` must be NULL or a handle not yet freed.
void handa_config_free(struct HandaConfig *cfg);

// Splits `target` into labeled, unlabeled and test parts and standardizes
// each domain when `standardize` is set.
//
// # Safety
// `source` and `target` must be live dataset handles and `out` writable.
enum HandaStatus handa_experiment_new(const struct HandaDataset *source,
                                      const struct HandaDataset *target,
                                      size_t labeled_per_class,
                                      uint64_t seed,
                                      bool standardize,
                                      struct HandaExperiment **out);

// Size of the held-out target test part, or 0 for NULL.
//
// # Safety
// `exp` must be NULL or a live experiment handle.
size_t handa_experiment_test_len(const struct HandaExperiment *exp);

// # Safety
// `exp` must be NULL or a handle not yet freed.
void handa_experiment_free(struct HandaExperiment *exp);

// Trains on an experiment. `cfg` may be NULL for the defaults.
//
// # Safety
// `exp` must be a live experiment handle, `cfg` NULL or live, `out` writable.
enum HandaStatus handa_train_experiment(const struct HandaExperiment *exp,
                                        const struct HandaConfig *cfg,
                                        struct HandaModel **out);

// Trains on explicit parts. `target_unlabeled` may carry labels; they are
// ignored.
//
// # Safety
// The three datasets must be live handles, `cfg` NULL or live, `out` writable.
enum HandaStatus handa_train(const struct HandaDataset *source,
                             const struct HandaDataset *target_labeled,
                             const struct HandaDataset *target_unlabeled,
                             const struct HandaConfig *cfg,
                             struct HandaModel **out);

// Test-split accuracy of `model` on `exp`.
//
// # Safety
// `model` and `exp` must be live handles and `accuracy` writable.
enum HandaStatus handa_model_evaluate(const struct HandaModel *model,
                                      const struct HandaExperiment *exp,
                                      double *accuracy);

// Predicts target-domain labels into `labels`, which holds `len` entries and
// must match the dataset's sample count.
//
// # Safety
// `model` and `target` must be live handles and `labels` must point to `len`
// writable values.
enum HandaStatus handa_model_predict_target(const struct HandaModel *model,
                                            const struct HandaDataset *target,
                                            size_t *labels,
                                            size_t len);

// Outer iterations run, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live model handle.
size_t handa_model_iterations(const struct HandaModel *model);

// Writes the convergence iteration to `iter` and returns true, or returns
// false when training hit the iteration budget (or `model` is NULL).
//
// # Safety
// `model` must be NULL or live; `iter` must be NULL or writable.
bool handa_model_converged_at(const struct HandaModel *model, size_t *iter);

// # Safety
// `model` must be NULL or a handle not yet freed.
void handa_model_free(struct HandaModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HANDA_H */

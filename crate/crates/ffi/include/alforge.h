#ifndef ALFORGE_H
#define ALFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum AlStatus {
  AL_OK = 0,
  // Bad arguments or configuration.
  AL_ERR_USAGE = 2,
  // Malformed or inconsistent data.
  AL_ERR_DATA = 3,
  // Non-finite values or numeric failure.
  AL_ERR_NUMERIC = 4,
  // A required pointer was null.
  AL_ERR_NULL = 5,
  // Internal panic caught at the boundary.
  AL_ERR_PANIC = 6,
} AlStatus;

// Opaque fitted k-means model.
typedef struct AlClusterModel AlClusterModel;

// Opaque dataset handle.
typedef struct AlDataset AlDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after success.
// Valid until the next call on the same thread.
const char *al_last_error_message(void);

// Reads a dataset file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum AlStatus al_dataset_load(const char *path, struct AlDataset **out);

// Number of samples; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle from `al_dataset_load`.
size_t al_dataset_len(const struct AlDataset *ds);

// Feature dimension; 0 for a null handle.
//
// # Safety
// As for `al_dataset_len`.
size_t al_dataset_dim(const struct AlDataset *ds);

// Number of iD classes; 0 for a null handle.
//
// # Safety
// As for `al_dataset_len`.
size_t al_dataset_classes(const struct AlDataset *ds);

// # Safety
// `ds` must be null or a live handle; it is invalid afterwards.
void al_dataset_free(struct AlDataset *ds);

// Annotation cost per accuracy point, rounded to two decimals.
//
// # Safety
// `out` must be writable.
enum AlStatus al_cost_per_accuracy(size_t cost, double accuracy, double *out);

// Largest-remainder split of `batch` over clusters of the given sizes.
//
// # Safety
// `sizes` and `out` must each point to `n` elements.
enum AlStatus al_compute_quotas(const size_t *sizes, size_t n, size_t batch, size_t *out);

// Fits k-means (k-means++ seeding, Lloyd iterations) to `n` row-major
// points of dimension `dim`. Row `i` gets sample id `i`.
//
// # Safety
// `points` must hold `n * dim` values; `out` must be writable.
enum AlStatus al_kmeans_fit(const double *points,
                            size_t n,
                            size_t dim,
                            size_t k,
                            uint64_t seed,
                            struct AlClusterModel **out);

// Number of clusters; 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t al_cluster_model_k(const struct AlClusterModel *model);

// Sum of squared distances to the assigned centroids; NaN for null.
//
// # Safety
// `model` must be null or a live handle.
double al_cluster_model_objective(const struct AlClusterModel *model);

// Copies the cluster index of every fitted point into `out`.
//
// # Safety
// `out` must hold `len` elements; `len` must equal the fitted point count.
enum AlStatus al_cluster_model_assignments(const struct AlClusterModel *model,
                                           size_t *out,
                                           size_t len);

// Copies the `k * dim` row-major centroids into `out`.
//
// # Safety
// `out` must hold `len` elements.
enum AlStatus al_cluster_model_centroids(const struct AlClusterModel *model,
                                         double *out,
                                         size_t len);

// # Safety
// `model` must be null or a live handle; it is invalid afterwards.
void al_cluster_model_free(struct AlClusterModel *model);

// Runs one experiment described by config text (same format as the CLI
// config file). On success `*summary_json` receives the run summary as a
// JSON string, to be released with `al_string_free`; `*metrics_csv`, when
// non-null, receives the per-stage metrics CSV.
//
// # Safety
// `config` must be a NUL-terminated string; `summary_json` must be
// writable; `metrics_csv` may be null.
enum AlStatus al_run_experiment(const char *config, char **summary_json, char **metrics_csv);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void al_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALFORGE_H */

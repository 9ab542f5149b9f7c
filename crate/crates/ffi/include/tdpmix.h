#ifndef TDPMIX_H
#define TDPMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum TdpmixStatus {
  TDPMIX_STATUS_OK = 0,
  TDPMIX_STATUS_NULL_POINTER = 1,
  TDPMIX_STATUS_INVALID_ARGUMENT = 2,
  TDPMIX_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Unreadable or malformed input file.
   */
  TDPMIX_STATUS_DATA = 4,
  TDPMIX_STATUS_CHECKPOINT = 5,
  /**
   * Numerical or sampler failure during a run.
   */
  TDPMIX_STATUS_RUNTIME = 6,
  /**
   * Caller buffer shorter than the result.
   */
  TDPMIX_STATUS_BUFFER_TOO_SMALL = 7,
  TDPMIX_STATUS_PANIC = 8,
} TdpmixStatus;

/**
 * Item layout for in-memory datasets.
 */
typedef enum TdpmixShape {
  TDPMIX_SHAPE_VECTOR = 0,
  TDPMIX_SHAPE_POINT2 = 1,
  TDPMIX_SHAPE_CURVE = 2,
  TDPMIX_SHAPE_IMAGE = 3,
} TdpmixShape;

typedef struct TdpmixBa TdpmixBa;

typedef struct TdpmixDataset TdpmixDataset;

typedef struct TdpmixJac TdpmixJac;

/**
 * Sampler settings for joint runs; start from [`tdpmix_jac_config_default`].
 */
typedef struct TdpmixJacConfig {
  /**
   * 1 = blocked optimization, 2 = importance sampling.
   */
  uint32_t sampler;
  /**
   * Proposals per item for the importance sampler.
   */
  size_t samples;
  /**
   * 0 = posterior modes, 1 = posterior predictive.
   */
  uint32_t plug_in;
  bool resample_gamma;
} TdpmixJacConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tdpmix_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tdpmix_version(void);

/**
 * Loads a dataset. `format` is `csv-curves`, `csv-points`, `pgm-dir`,
 * `idx`, or null to guess from the path. `labels` may be null.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum TdpmixStatus tdpmix_dataset_load(const char *path,
                                      const char *format,
                                      const char *labels,
                                      struct TdpmixDataset **out);

/**
 * Builds a dataset from `n_items` row-major items of equal length.
 * `width`/`height` describe images; for other shapes `width` is the item
 * length and `height` is ignored. `labels` may be null.
 *
 * # Safety
 * `values` must hold `n_items * item length` doubles, `labels` (if not
 * null) `n_items` entries, and `out` must be writable.
 */
enum TdpmixStatus tdpmix_dataset_new(const double *values,
                                     size_t n_items,
                                     enum TdpmixShape shape,
                                     size_t width,
                                     size_t height,
                                     const size_t *labels,
                                     struct TdpmixDataset **out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library, freed once.
 */
void tdpmix_dataset_free(struct TdpmixDataset *dataset);

/**
 * Item count and values per item.
 *
 * # Safety
 * `dataset` must be a live handle; outputs must be writable.
 */
enum TdpmixStatus tdpmix_dataset_size(const struct TdpmixDataset *dataset,
                                      size_t *n_items,
                                      size_t *item_len);

struct TdpmixJacConfig tdpmix_jac_config_default(void);

/**
 * Starts a joint run with every item in one cluster. `family` may be null
 * for the dataset's default family.
 *
 * # Safety
 * `dataset` must be a live handle, `family` null or NUL-terminated, and
 * `out` writable.
 */
enum TdpmixStatus tdpmix_jac_new(const struct TdpmixDataset *dataset,
                                 const char *family,
                                 double gamma,
                                 uint64_t seed,
                                 struct TdpmixJac **out);

/**
 * Assigns the items of `dataset` against the clusters stored in a
 * checkpoint file. Items stay unassigned until the first iteration.
 *
 * # Safety
 * As [`tdpmix_jac_new`].
 */
enum TdpmixStatus tdpmix_jac_from_checkpoint(const char *path,
                                             const struct TdpmixDataset *dataset,
                                             uint64_t seed,
                                             struct TdpmixJac **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void tdpmix_jac_free(struct TdpmixJac *model);

/**
 * Seeds one locked cluster per distinct label: `items[k]` carries
 * `labels[k]`.
 *
 * # Safety
 * `items` and `labels` must hold `n` entries.
 */
enum TdpmixStatus tdpmix_jac_seed(struct TdpmixJac *model,
                                  const size_t *items,
                                  const size_t *labels,
                                  size_t n,
                                  size_t replication);

/**
 * Runs `iterations` sweeps. `workers` = 0 runs the sequential sampler;
 * any other value uses the snapshot map/reduce schedule on that many
 * threads. `config` may be null for defaults. On failure the model keeps
 * its last completed iteration.
 *
 * # Safety
 * `model` must be a live handle; `config` null or readable.
 */
enum TdpmixStatus tdpmix_jac_run(struct TdpmixJac *model,
                                 size_t iterations,
                                 size_t workers,
                                 const struct TdpmixJacConfig *config);

/**
 * Item count, cluster count, concentration and joint log score.
 *
 * # Safety
 * `model` must be a live handle; any output may be null to skip it.
 */
enum TdpmixStatus tdpmix_jac_summary(const struct TdpmixJac *model,
                                     size_t *n_items,
                                     size_t *clusters,
                                     double *gamma,
                                     double *score);

/**
 * Dense cluster labels (0-based, in cluster creation order); `-1` marks
 * unassigned items.
 *
 * # Safety
 * `out` must hold `capacity` entries.
 */
enum TdpmixStatus tdpmix_jac_labels(const struct TdpmixJac *model, int64_t *out, size_t capacity);

/**
 * Aligned items, row-major (`n_items * item_len` values).
 *
 * # Safety
 * `out` must hold `capacity` doubles.
 */
enum TdpmixStatus tdpmix_jac_aligned(const struct TdpmixJac *model, double *out, size_t capacity);

/**
 * Transformation parameters, row-major (`n_items * family dim` values).
 *
 * # Safety
 * `out` must hold `capacity` doubles.
 */
enum TdpmixStatus tdpmix_jac_params(const struct TdpmixJac *model, double *out, size_t capacity);

/**
 * Writes the cluster statistics to `path` (no raw items).
 *
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum TdpmixStatus tdpmix_jac_save_checkpoint(const struct TdpmixJac *model, const char *path);

/**
 * Starts a single-template alignment run at the identity.
 *
 * # Safety
 * As [`tdpmix_jac_new`].
 */
enum TdpmixStatus tdpmix_ba_new(const struct TdpmixDataset *dataset,
                                const char *family,
                                uint64_t seed,
                                struct TdpmixBa **out);

/**
 * # Safety
 * `ba` must be null or a handle from this library, freed once.
 */
void tdpmix_ba_free(struct TdpmixBa *ba);

/**
 * Runs up to `sweeps` sweeps (stopping early on convergence) and reports
 * the final joint log score.
 *
 * # Safety
 * `ba` must be a live handle; `score` null or writable.
 */
enum TdpmixStatus tdpmix_ba_run(struct TdpmixBa *ba, size_t sweeps, double *score);

/**
 * Aligned items, row-major.
 *
 * # Safety
 * `out` must hold `capacity` doubles.
 */
enum TdpmixStatus tdpmix_ba_aligned(const struct TdpmixBa *ba, double *out, size_t capacity);

/**
 * Rand index between two labelings of `n` items.
 *
 * # Safety
 * `pred` and `truth` must hold `n` entries; `out` must be writable.
 */
enum TdpmixStatus tdpmix_rand_index(const int64_t *pred,
                                    const int64_t *truth,
                                    size_t n,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TDPMIX_H */

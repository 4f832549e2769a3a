#ifndef NERFSEG_H
#define NERFSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Training stage recorded in a checkpoint.
 */
typedef enum NsCheckpointStage {
  NS_CHECKPOINT_STAGE_STAGE1_RGB = 0,
  NS_CHECKPOINT_STAGE_STAGE2_MASK = 1,
  NS_CHECKPOINT_STAGE_JOINT = 2,
} NsCheckpointStage;

/**
 * Pipeline stage run by [`ns_run_stage`].
 */
typedef enum NsStage {
  NS_STAGE_SYNTH = 0,
  NS_STAGE_TRAIN = 1,
  NS_STAGE_FINETUNE = 2,
  NS_STAGE_JOINT = 3,
  NS_STAGE_SA3D = 4,
  NS_STAGE_EXTRACT = 5,
  NS_STAGE_CLUSTER = 6,
  NS_STAGE_DENSITY_DIFF = 7,
  NS_STAGE_EVAL = 8,
} NsStage;

/**
 * Result code of every call.
 */
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  NS_STATUS_IO = 3,
  NS_STATUS_FORMAT = 4,
  NS_STATUS_CONFIG = 5,
  NS_STATUS_MISMATCH = 6,
  NS_STATUS_NON_FINITE = 7,
  NS_STATUS_MISSING = 8,
  NS_STATUS_PANIC = 9,
} NsStatus;

/**
 * Trained field with its sampling bounds.
 */
typedef struct NsCheckpoint NsCheckpoint;

/**
 * Point cloud with per-point labels and cluster ids.
 */
typedef struct NsCloud NsCloud;

/**
 * Pipeline configuration.
 */
typedef struct NsConfig NsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *ns_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ns_version(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ns_string_free(char *s);

/**
 * Creates the default configuration.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum NsStatus ns_config_default(struct NsConfig **out);

/**
 * Reads a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsStatus ns_config_load(const char *path, struct NsConfig **out);

/**
 * Applies one `section.key=value` override.
 *
 * # Safety
 * `config` must be a live handle and `assignment` a NUL-terminated string.
 */
enum NsStatus ns_config_set(struct NsConfig *config, const char *assignment);

/**
 * Sets every RNG seed in the configuration.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum NsStatus ns_config_set_seed(struct NsConfig *config, uint64_t seed);

/**
 * Serializes the configuration; free the result with [`ns_string_free`].
 *
 * # Safety
 * `config` must be a live handle and `out` writable.
 */
enum NsStatus ns_config_to_json(const struct NsConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a live handle; it is invalid afterwards.
 */
void ns_config_free(struct NsConfig *config);

/**
 * Runs one pipeline stage against an output directory, exactly as the
 * matching command-line subcommand does.
 *
 * # Safety
 * `config` must be a live handle and `out_dir` a NUL-terminated string.
 */
enum NsStatus ns_run_stage(const struct NsConfig *config, const char *out_dir, enum NsStage stage);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsStatus ns_checkpoint_load(const char *path, struct NsCheckpoint **out);

/**
 * # Safety
 * `checkpoint` must be a live handle and `path` a NUL-terminated string.
 */
enum NsStatus ns_checkpoint_save(const struct NsCheckpoint *checkpoint, const char *path);

/**
 * # Safety
 * `checkpoint` must be null or a live handle; it is invalid afterwards.
 */
void ns_checkpoint_free(struct NsCheckpoint *checkpoint);

/**
 * Stage tag, parameter count, mask-head flag and near/far of a checkpoint.
 * Any output pointer may be null.
 *
 * # Safety
 * `checkpoint` must be a live handle; non-null outputs must be writable.
 */
enum NsStatus ns_checkpoint_info(const struct NsCheckpoint *checkpoint,
                                 enum NsCheckpointStage *stage,
                                 size_t *param_count,
                                 bool *has_mask,
                                 double *near,
                                 double *far);

/**
 * Evaluates the field at `n` points. `points` and `dirs` hold `3n`
 * doubles, directions must be unit length. Writes `3n` colours and `n`
 * densities; `mask` (n values) may be null and is required to be null for
 * fields without a mask head.
 *
 * # Safety
 * Every non-null buffer must hold the stated number of elements.
 */
enum NsStatus ns_checkpoint_query(const struct NsCheckpoint *checkpoint,
                                  const double *points,
                                  const double *dirs,
                                  size_t n,
                                  float *rgb,
                                  float *sigma,
                                  float *mask);

/**
 * Renders `n` rays between the checkpoint's near and far planes.
 * `origins` and `dirs` hold `3n` doubles, `background` 3 doubles, and
 * `rgb` receives `3n` doubles.
 *
 * # Safety
 * Every buffer must hold the stated number of elements.
 */
enum NsStatus ns_checkpoint_render(const struct NsCheckpoint *checkpoint,
                                   const double *origins,
                                   const double *dirs,
                                   size_t n,
                                   size_t samples_per_ray,
                                   const double *background,
                                   double *rgb);

/**
 * Builds an unlabeled cloud from `3n` coordinates.
 *
 * # Safety
 * `xyz` must hold `3n` doubles and `out` be writable.
 */
enum NsStatus ns_cloud_from_points(const double *xyz, size_t n, struct NsCloud **out);

/**
 * Reads a PLY point cloud.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum NsStatus ns_cloud_load_ply(const char *path, struct NsCloud **out);

/**
 * # Safety
 * `cloud` must be a live handle and `path` a NUL-terminated string.
 */
enum NsStatus ns_cloud_save_ply(const struct NsCloud *cloud, const char *path);

/**
 * # Safety
 * `cloud` must be null or a live handle; it is invalid afterwards.
 */
void ns_cloud_free(struct NsCloud *cloud);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `cloud` must be null or a live handle.
 */
size_t ns_cloud_len(const struct NsCloud *cloud);

/**
 * Copies coordinates, labels and cluster ids into caller buffers of
 * `3 * capacity`, `capacity` and `capacity` elements. Any buffer may be
 * null. Fails when `capacity` is smaller than the cloud.
 *
 * # Safety
 * `cloud` must be a live handle; non-null buffers must hold the stated
 * number of elements.
 */
enum NsStatus ns_cloud_copy(const struct NsCloud *cloud,
                            size_t capacity,
                            double *xyz,
                            uint32_t *labels,
                            int64_t *cluster_ids);

/**
 * Runs the counting pipeline with the configuration's cluster settings.
 * Writes the predicted count and, when `clustered` is non-null, a new
 * cloud carrying each surviving point's cluster id.
 *
 * # Safety
 * `cloud` and `config` must be live handles; `count` must be writable and
 * `clustered` null or writable.
 */
enum NsStatus ns_count(const struct NsCloud *cloud,
                       const struct NsConfig *config,
                       size_t *count,
                       struct NsCloud **clustered);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NERFSEG_H */

#ifndef MTLSCHED_H
#define MTLSCHED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MtlsStatus {
  MTLS_STATUS_OK = 0,
  MTLS_STATUS_NULL_POINTER = 1,
  MTLS_STATUS_INVALID_UTF8 = 2,
  MTLS_STATUS_CONFIG = 3,
  MTLS_STATUS_PARSE = 4,
  MTLS_STATUS_IO = 5,
  MTLS_STATUS_NUMERIC = 6,
  MTLS_STATUS_DIMENSION = 7,
  MTLS_STATUS_ARGUMENT = 8,
  MTLS_STATUS_PRECONDITION = 9,
  MTLS_STATUS_INTERNAL = 10,
} MtlsStatus;

/**
 * A loaded, validated experiment configuration.
 */
typedef struct MtlsExperiment MtlsExperiment;

/**
 * The result of one training run.
 */
typedef struct MtlsRun MtlsRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or NULL after a success.
 * The string stays valid until the next call on this thread.
 */
const char *mtls_last_error(void);

/**
 * Loads and validates a TOML experiment file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MtlsStatus mtls_experiment_load(const char *path, struct MtlsExperiment **out);

/**
 * Parses TOML config text; relative paths resolve against `base_dir`.
 *
 * # Safety
 * `text` and `base_dir` must be NUL-terminated strings; `out` must be writable.
 */
enum MtlsStatus mtls_experiment_parse(const char *text,
                                      const char *base_dir,
                                      struct MtlsExperiment **out);

/**
 * # Safety
 * `exp` must be NULL or a handle from this API that has not been freed.
 */
void mtls_experiment_free(struct MtlsExperiment *exp);

/**
 * # Safety
 * `exp` must be a live handle.
 */
enum MtlsStatus mtls_experiment_set_seed(struct MtlsExperiment *exp, uint64_t seed);

/**
 * Selects the schedule by name: uniform, constant, exponential, mixture or
 * learned.
 *
 * # Safety
 * `exp` must be a live handle; `name` a NUL-terminated string.
 */
enum MtlsStatus mtls_experiment_set_schedule(struct MtlsExperiment *exp, const char *name);

/**
 * Trains in memory without writing files.
 *
 * # Safety
 * `exp` must be a live handle; `out` must be writable.
 */
enum MtlsStatus mtls_run(const struct MtlsExperiment *exp, struct MtlsRun **out);

/**
 * Trains and writes the step log, summary, timing and checkpoints to
 * `out_dir`. `out` may be NULL when the run handle is not needed.
 *
 * # Safety
 * `exp` must be a live handle; `out_dir` a NUL-terminated string.
 */
enum MtlsStatus mtls_run_to_dir(const struct MtlsExperiment *exp,
                                const char *out_dir,
                                struct MtlsRun **out);

/**
 * # Safety
 * `run` must be NULL or a handle from this API that has not been freed.
 */
void mtls_run_free(struct MtlsRun *run);

/**
 * Number of steps executed; 0 for a NULL handle.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t mtls_run_steps(const struct MtlsRun *run);

/**
 * Number of tasks (main plus auxiliaries); 0 for a NULL handle.
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
size_t mtls_run_num_tasks(const struct MtlsRun *run);

/**
 * Number of oracle queries (equal to the replay buffer size).
 *
 * # Safety
 * `run` must be NULL or a live handle.
 */
uint64_t mtls_run_oracle_queries(const struct MtlsRun *run);

/**
 * Validation loss before and after training.
 *
 * # Safety
 * `run` must be a live handle; both outputs must be writable.
 */
enum MtlsStatus mtls_run_val_losses(const struct MtlsRun *run, double *initial, double *final_);

/**
 * Copies the per-task selection counts into `counts[0..len]`; `len` must
 * equal [`mtls_run_num_tasks`].
 *
 * # Safety
 * `run` must be a live handle; `counts` must hold `len` values.
 */
enum MtlsStatus mtls_run_selection_counts(const struct MtlsRun *run, uint64_t *counts, size_t len);

/**
 * Oracle task weights from precomputed gradients.
 *
 * `grads` holds `num_tasks` rows of `dim` values (row-major); `grad_val`
 * holds `dim` values; `weights` receives `num_tasks` values.
 *
 * # Safety
 * All buffers must have the stated lengths.
 */
enum MtlsStatus mtls_oracle_weights(const double *grad_val,
                                    const double *grads,
                                    size_t num_tasks,
                                    size_t dim,
                                    size_t main_index,
                                    double *weights);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTLSCHED_H */

/* C interface to the desmoke point-cloud filtering pipeline. */

#ifndef DESMOKE_H
#define DESMOKE_H

/* Generated by cbindgen from crates/ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a C API call. Anything but `Ok` leaves a message for
 * [`dsm_last_error`] on the calling thread.
 */
typedef enum DsmStatus {
  /**
   * The call succeeded.
   */
  DSM_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  DSM_STATUS_NULL_POINTER = 1,
  /**
   * An argument was malformed (bad UTF-8, bad length, bad value).
   */
  DSM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The configuration failed to parse or validate.
   */
  DSM_STATUS_INVALID_CONFIG = 3,
  /**
   * The pipeline rejected the frame; see `dsm_last_error`.
   */
  DSM_STATUS_PROCESS_FAILED = 4,
  /**
   * A panic was caught at the boundary; state may be stale, not corrupt.
   */
  DSM_STATUS_INTERNAL = 5,
} DsmStatus;

/**
 * Opaque pipeline configuration handle.
 */
typedef struct DsmConfig DsmConfig;

/**
 * Opaque streaming pipeline handle: a validated config plus the mutable
 * state (range gate, intensity threshold) threaded across frames.
 */
typedef struct DsmPipeline DsmPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message from the most recent failing call on this thread, empty when the
 * last call succeeded. The pointer stays valid until the next API call on
 * the same thread; copy it out if you need to keep it.
 */
const char *dsm_last_error(void);

/**
 * Library version as a static string; do not free.
 */
const char *dsm_version(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 *
 * `s` must be a pointer previously returned by a `dsm_*` function that
 * documents this deallocator, and must not be used afterwards.
 */
void dsm_string_free(char *s);

/**
 * A new configuration with the documented defaults. Free with
 * [`dsm_config_free`]. Returns null only on internal failure.
 */
struct DsmConfig *dsm_config_default(void);

/**
 * Parses and validates a JSON configuration. Unknown keys and
 * out-of-range values are errors; absent keys keep their defaults. On
 * success writes a handle to `out` (free with [`dsm_config_free`]).
 *
 * # Safety
 *
 * `json` must be a valid nul-terminated C string and `out` a valid
 * pointer; both must outlive the call.
 */
enum DsmStatus dsm_config_from_json(const char *json, struct DsmConfig **out);

/**
 * Serializes a configuration to pretty JSON. Free the returned string with
 * [`dsm_string_free`]. Returns null if `cfg` is null.
 *
 * # Safety
 *
 * `cfg` must be a live handle from this library or null.
 */
char *dsm_config_to_json(const struct DsmConfig *cfg);

/**
 * Frees a configuration handle. Null is a no-op.
 *
 * # Safety
 *
 * `cfg` must come from this library and must not be used afterwards.
 */
void dsm_config_free(struct DsmConfig *cfg);

/**
 * Opens a pipeline on a copy of `cfg`; the config handle remains owned by
 * the caller. Free with [`dsm_pipeline_free`].
 *
 * # Safety
 *
 * `cfg` must be a live config handle and `out` a valid pointer.
 */
enum DsmStatus dsm_pipeline_new(const struct DsmConfig *cfg, struct DsmPipeline **out);

/**
 * Returns the pipeline to its initial state (initial split radius and
 * intensity threshold), as if no frames had been processed.
 *
 * # Safety
 *
 * `pipeline` must be a live handle from [`dsm_pipeline_new`].
 */
enum DsmStatus dsm_pipeline_reset(struct DsmPipeline *pipeline);

/**
 * Frees a pipeline handle. Null is a no-op.
 *
 * # Safety
 *
 * `pipeline` must come from [`dsm_pipeline_new`] and must not be used
 * afterwards.
 */
void dsm_pipeline_free(struct DsmPipeline *pipeline);

/**
 * Filters one frame.
 *
 * `points` holds `point_count` points as interleaved
 * `x, y, z, intensity` doubles (`4 * point_count` values). `timestamp` is
 * seconds; pass NaN for an untimed frame, which disables the once-per-
 * second adaptive updates for that frame. On success `keep_mask[i]` is 1
 * where point `i` survived every stage and 0 where it was rejected or
 * fell beyond the outer range gate.
 *
 * When `report_json` is non-null it receives the frame report (stage
 * counts, timings, adaptive snapshot) as a JSON document; free it with
 * [`dsm_string_free`]. Timestamps are not required to be monotonic here;
 * feeding frames out of order simply delays the adaptive samplers.
 *
 * # Safety
 *
 * `pipeline` must be a live handle. `points` must reference
 * `4 * point_count` readable doubles and `keep_mask` `point_count`
 * writable bytes (both may be null only when `point_count` is 0).
 * `report_json`, when non-null, must be a valid pointer.
 */
enum DsmStatus dsm_pipeline_process(struct DsmPipeline *pipeline,
                                    const double *points,
                                    size_t point_count,
                                    double timestamp,
                                    uint8_t *keep_mask,
                                    char **report_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DESMOKE_H */

#ifndef LIFTGAN_H
#define LIFTGAN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Values per 2D pose.
 */
#define LG_POSE_DIM 28

/**
 * Values per 3D skeleton.
 */
#define LG_SKELETON_DIM 42

typedef enum LgStatus {
  LG_STATUS_OK = 0,
  LG_STATUS_NULL_POINTER = 1,
  LG_STATUS_INVALID_ARGUMENT = 2,
  LG_STATUS_IO = 3,
  LG_STATUS_CONFIG = 4,
  LG_STATUS_SHAPE = 5,
  LG_STATUS_NON_FINITE = 6,
  LG_STATUS_DEGENERATE = 7,
  LG_STATUS_PARSE = 8,
  LG_STATUS_DOMAIN = 9,
  LG_STATUS_DIVERGED = 10,
  /**
   * A Rust panic was caught at the boundary.
   */
  LG_STATUS_INTERNAL = 99,
} LgStatus;

/**
 * Opaque handle to a loaded generator.
 */
typedef struct LgModel LgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The message of the last failed call on this thread, or null after a
 * successful one. Valid until the next call on the same thread.
 */
const char *lg_last_error(void);

/**
 * Loads the checkpoint directory `path` and stores a new handle in `*out`.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum LgStatus lg_model_load(const char *path, struct LgModel **out);

/**
 * Releases a handle from [`lg_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void lg_model_free(struct LgModel *model);

/**
 * Lifts `n` poses into `out` (`n * 42` doubles). Raw poses are centered and
 * scaled with the checkpoint's statistics first unless `normalized` is
 * nonzero. Skeletons are in normalized units.
 *
 * # Safety
 * `model` must be a live handle, `poses` must hold `n * 28` doubles and
 * `out` must have room for `n * 42`.
 */
enum LgStatus lg_model_lift(struct LgModel *model,
                            const double *poses_2d,
                            size_t n,
                            int32_t normalized,
                            double *out);

/**
 * The constant-depth lift: every joint at depth `distance + 1`.
 *
 * # Safety
 * `poses_2d` must hold `n * 28` doubles and `out` room for `n * 42`.
 */
enum LgStatus lg_flat_baseline(const double *poses_2d, size_t n, double distance, double *out);

/**
 * Pinhole projection `(X/Z, Y/Z)` of `n` skeletons into `out`
 * (`n * 28` doubles).
 *
 * # Safety
 * `skeletons` must hold `n * 42` doubles and `out` room for `n * 28`.
 */
enum LgStatus lg_project(const double *skeletons_3d, size_t n, double *out);

/**
 * Mean per-joint error after similarity alignment, times `unit_scale_mm`,
 * averaged over `n` pairs into `*mean_mm`. `per_sample_mm` may be null;
 * otherwise it receives `n` values.
 *
 * # Safety
 * `pred` and `gt` must hold `n * 42` doubles, `mean_mm` must be valid and
 * `per_sample_mm`, when non-null, must have room for `n` doubles.
 */
enum LgStatus lg_mpjpe(const double *pred,
                       const double *gt,
                       size_t n,
                       double unit_scale_mm,
                       double *mean_mm,
                       double *per_sample_mm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIFTGAN_H */

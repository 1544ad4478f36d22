/* C ABI for the rvc pillar voxelizer. Generated by cbindgen. */

#ifndef RVC_H
#define RVC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible entry point.
 */
typedef enum RvcStatus {
  RvcOk = 0,
  /**
   * A required pointer argument was null.
   */
  RvcNullArgument = 1,
  /**
   * An argument value was rejected (bad range, bad voxel size, ...).
   */
  RvcInvalidArgument = 2,
  /**
   * The underlying file could not be read.
   */
  RvcIoError = 3,
  /**
   * The input bytes or values were malformed.
   */
  RvcDataError = 4,
  /**
   * A caller-provided buffer is too small; nothing was written.
   */
  RvcBufferTooSmall = 5,
  /**
   * Unexpected internal failure.
   */
  RvcInternal = 6,
} RvcStatus;

/**
 * An immutable point cloud.
 */
typedef struct RvcCloud RvcCloud;

/**
 * A validated pillar-grid geometry.
 */
typedef struct RvcGrid RvcGrid;

/**
 * Voxelization result: the point-to-pillar assignment plus the per-point
 * feature rows.
 */
typedef struct RvcVoxelization RvcVoxelization;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *rvc_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rvc_version(void);

/**
 * Number of per-point feature channels produced by the voxelizer.
 */
uintptr_t rvc_feature_channels(void);

/**
 * Loads a KITTI `.bin` cloud (4 little-endian f32 per point).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RvcStatus rvc_cloud_load_kitti(const char *path, struct RvcCloud **out);

/**
 * Builds a single-batch cloud from `n_points` interleaved xyz triples.
 *
 * # Safety
 * `xyz` must point to `3 * n_points` doubles; `out` must be valid.
 */
enum RvcStatus rvc_cloud_from_xyz(const double *xyz, uintptr_t n_points, struct RvcCloud **out);

/**
 * Number of points in the cloud; 0 for a null handle.
 *
 * # Safety
 * `cloud` must be a live handle from this library or null.
 */
uintptr_t rvc_cloud_len(const struct RvcCloud *cloud);

/**
 * # Safety
 * `cloud` must be a handle from this library, not yet freed, or null.
 */
void rvc_cloud_free(struct RvcCloud *cloud);

/**
 * Creates a pillar grid over `[min, max)` with the given x/y cell sizes.
 * The extents must be integer multiples of the cell sizes.
 *
 * # Safety
 * `min` and `max` must point to 3 doubles each; `out` must be valid.
 */
enum RvcStatus rvc_grid_new_pillars(const double *min,
                                    const double *max,
                                    double voxel_x,
                                    double voxel_y,
                                    struct RvcGrid **out);

/**
 * Writes the grid cell counts (x, y, z).
 *
 * # Safety
 * All pointers must be valid.
 */
enum RvcStatus rvc_grid_size(const struct RvcGrid *grid,
                             uintptr_t *nx,
                             uintptr_t *ny,
                             uintptr_t *nz);

/**
 * # Safety
 * `grid` must be a handle from this library, not yet freed, or null.
 */
void rvc_grid_free(struct RvcGrid *grid);

/**
 * Assigns every in-range point to a pillar and computes the 9-channel
 * per-point features.
 *
 * # Safety
 * `cloud` and `grid` must be live handles; `out` must be valid.
 */
enum RvcStatus rvc_voxelize(const struct RvcCloud *cloud,
                            const struct RvcGrid *grid,
                            struct RvcVoxelization **out);

/**
 * # Safety
 * `v` must be a live handle or null.
 */
uintptr_t rvc_voxelization_pillar_count(const struct RvcVoxelization *v);

/**
 * # Safety
 * `v` must be a live handle or null.
 */
uintptr_t rvc_voxelization_points_assigned(const struct RvcVoxelization *v);

/**
 * # Safety
 * `v` must be a live handle or null.
 */
uintptr_t rvc_voxelization_points_skipped(const struct RvcVoxelization *v);

/**
 * Number of feature rows (= points assigned).
 *
 * # Safety
 * `v` must be a live handle or null.
 */
uintptr_t rvc_voxelization_feature_rows(const struct RvcVoxelization *v);

/**
 * Copies `pillar_count * 3` cell coordinates as (row, col, layer) triples.
 *
 * # Safety
 * `v` must be a live handle; `buf` must hold at least `len` u32 values.
 */
enum RvcStatus rvc_voxelization_pillar_coords(const struct RvcVoxelization *v,
                                              uint32_t *buf,
                                              uintptr_t len);

/**
 * Copies the per-pillar point counts.
 *
 * # Safety
 * `v` must be a live handle; `buf` must hold at least `len` u32 values.
 */
enum RvcStatus rvc_voxelization_occupancy(const struct RvcVoxelization *v,
                                          uint32_t *buf,
                                          uintptr_t len);

/**
 * Copies the pillar ordinal of every feature row.
 *
 * # Safety
 * `v` must be a live handle; `buf` must hold at least `len` u32 values.
 */
enum RvcStatus rvc_voxelization_pillar_of_row(const struct RvcVoxelization *v,
                                              uint32_t *buf,
                                              uintptr_t len);

/**
 * Copies the feature matrix (`feature_rows * rvc_feature_channels()`
 * doubles, row-major).
 *
 * # Safety
 * `v` must be a live handle; `buf` must hold at least `len` doubles.
 */
enum RvcStatus rvc_voxelization_features(const struct RvcVoxelization *v,
                                         double *buf,
                                         uintptr_t len);

/**
 * # Safety
 * `v` must be a handle from this library, not yet freed, or null.
 */
void rvc_voxelization_free(struct RvcVoxelization *v);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RVC_H */

#ifndef STEREOLOC_H
#define STEREOLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlStatus {
  SL_STATUS_OK = 0,
  SL_STATUS_NULL_POINTER = 1,
  SL_STATUS_INVALID_ARGUMENT = 2,
  SL_STATUS_GEOMETRY = 3,
  SL_STATUS_BUFFER_TOO_SMALL = 4,
  SL_STATUS_CONFIG = 5,
  SL_STATUS_PANIC = 99,
} SlStatus;

typedef enum SlSide {
  SL_SIDE_LEFT = 0,
  SL_SIDE_RIGHT = 1,
} SlSide;

// Opaque rig plus association settings.
typedef struct SlLocalizer SlLocalizer;

// Opaque stereo rig.
typedef struct SlRig SlRig;

// Rig description. Set `depth_constant` to 0 to use `focal_px * baseline`.
// A negative principal point selects the image center.
typedef struct SlRigParams {
  double focal_length_m;
  double pixel_pitch_m;
  double principal_x;
  double principal_y;
  uint32_t width;
  uint32_t height;
  double baseline_m;
  double depth_constant;
} SlRigParams;

// One detection in normalized image coordinates.
typedef struct SlBox {
  uint32_t class_id;
  double cx;
  double cy;
  double w;
  double h;
  double confidence;
} SlBox;

typedef struct SlEstimate {
  uint32_t target_ordinal;
  uint32_t left_index;
  uint32_t right_index;
  double disparity_px;
  double depth_m;
  double x_m;
  double y_m;
  double z_m;
  double confidence;
} SlEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *stereoloc_version(void);

// Copies the calling thread's last error message into `buf` (truncated and
// NUL-terminated) and returns the full message length excluding the NUL.
// Returns 0 when the last call succeeded.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t stereoloc_last_error_message(char *buf, size_t len);

// # Safety
// `params` must point to a valid `SlRigParams`; `out_rig` must be writable.
enum SlStatus stereoloc_rig_new(const struct SlRigParams *params, struct SlRig **out_rig);

// Builds a rig from a JSON run configuration (the same format the CLI reads).
//
// # Safety
// `json` must be a NUL-terminated string; `out_rig` must be writable.
enum SlStatus stereoloc_rig_from_config_json(const char *json, struct SlRig **out_rig);

// # Safety
// `rig` must be null or a handle from a `stereoloc_rig_*` constructor that
// has not been freed.
void stereoloc_rig_free(struct SlRig *rig);

// # Safety
// `rig` must be a live handle; `out_k` must be writable.
enum SlStatus stereoloc_depth_constant(const struct SlRig *rig, double *out_k);

// Projects a world point into one camera, in pixels.
//
// # Safety
// `rig` must be a live handle; `out_u` and `out_v` must be writable.
enum SlStatus stereoloc_project(const struct SlRig *rig,
                                double x,
                                double y,
                                double z,
                                enum SlSide side,
                                double *out_u,
                                double *out_v);

// # Safety
// `rig` must be a live handle; `out_depth` must be writable.
enum SlStatus stereoloc_triangulate_depth(const struct SlRig *rig,
                                          double disparity_px,
                                          double *out_depth);

// Back-projects a left-image pixel at the given depth into the world frame.
//
// # Safety
// `rig` must be a live handle; `out_xyz` must point to 3 writable doubles.
enum SlStatus stereoloc_back_project(const struct SlRig *rig,
                                     double u,
                                     double v,
                                     double depth_m,
                                     double *out_xyz);

// Creates a localizer over a copy of `rig` with default association
// settings, keeping class 0 only.
//
// # Safety
// `rig` must be a live handle; `out_localizer` must be writable.
enum SlStatus stereoloc_localizer_new(const struct SlRig *rig, struct SlLocalizer **out_localizer);

// Creates a localizer from a JSON run configuration.
//
// # Safety
// `json` must be a NUL-terminated string; `out_localizer` must be writable.
enum SlStatus stereoloc_localizer_from_config_json(const char *json,
                                                   struct SlLocalizer **out_localizer);

// # Safety
// `localizer` must be null or a live handle.
void stereoloc_localizer_free(struct SlLocalizer *localizer);

// Localizes one stereo frame. `*out_count` always receives the number of
// estimates; if it exceeds `capacity` nothing is written and
// `SL_STATUS_BUFFER_TOO_SMALL` is returned.
//
// # Safety
// `left`/`right` must point to `n_left`/`n_right` boxes (either may be null
// when its count is 0). `out` must point to `capacity` writable estimates
// (null allowed when `capacity` is 0). `out_count` must be writable.
enum SlStatus stereoloc_localize_frame(const struct SlLocalizer *localizer,
                                       uint64_t frame_id,
                                       const struct SlBox *left,
                                       size_t n_left,
                                       const struct SlBox *right,
                                       size_t n_right,
                                       struct SlEstimate *out,
                                       size_t capacity,
                                       size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEREOLOC_H */

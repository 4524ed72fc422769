#ifndef SEMSPLAT_H
#define SEMSPLAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SemsplatStatus {
  SEMSPLAT_STATUS_OK = 0,
  // Null pointer, bad UTF-8, wrong buffer size or out-of-range value.
  SEMSPLAT_STATUS_INVALID_ARGUMENT = 1,
  SEMSPLAT_STATUS_IO = 2,
  // A file was read but its contents are malformed.
  SEMSPLAT_STATUS_FORMAT = 3,
  SEMSPLAT_STATUS_CONFIG = 4,
  SEMSPLAT_STATUS_ENCODER_UNAVAILABLE = 5,
  SEMSPLAT_STATUS_ENCODER = 6,
  SEMSPLAT_STATUS_PANIC = 7,
} SemsplatStatus;

// Opaque query result handle.
typedef struct SemsplatQuery SemsplatQuery;

// Opaque scene handle.
typedef struct SemsplatScene SemsplatScene;

// Pinhole camera; `world_to_camera` is a row-major 4×4 matrix with OpenCV
// axes (x right, y down, z forward).
typedef struct SemsplatCamera {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t width;
  uint32_t height;
  double world_to_camera[16];
} SemsplatCamera;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next call into this library on the same
// thread.
const char *semsplat_last_error(void);

// Library version as a static NUL-terminated string.
const char *semsplat_version(void);

// Loads a checkpoint into a new scene handle stored in `*out`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_load(const char *path, struct SemsplatScene **out);

// Writes the scene to `path` atomically.
//
// # Safety
// `scene` must be a live handle and `path` a NUL-terminated string.
enum SemsplatStatus semsplat_scene_save(const struct SemsplatScene *scene, const char *path);

// Copies a scene.
//
// # Safety
// `scene` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_clone(const struct SemsplatScene *scene,
                                         struct SemsplatScene **out);

// Releases a scene handle. Null is ignored.
//
// # Safety
// `scene` must be null or a handle not yet freed.
void semsplat_scene_free(struct SemsplatScene *scene);

// Number of Gaussians.
//
// # Safety
// `scene` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_len(const struct SemsplatScene *scene, size_t *out);

// Number of dictionary labels (classes excluding "undetected").
//
// # Safety
// `scene` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_num_labels(const struct SemsplatScene *scene, size_t *out);

// Dictionary label `index` (0-based). The string is owned by the scene and
// valid until the scene is edited or freed.
//
// # Safety
// `scene` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_label(const struct SemsplatScene *scene,
                                         size_t index,
                                         const char **out);

// Embedding dimension of the scene's label table.
//
// # Safety
// `scene` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_scene_embedding_dim(const struct SemsplatScene *scene, size_t *out);

// Renders RGB into `rgb` (row-major `height × width × 3`, `len` floats).
//
// # Safety
// `scene` must be a live handle, `camera` readable and `rgb` writable for
// `len` floats.
enum SemsplatStatus semsplat_render(const struct SemsplatScene *scene,
                                    const struct SemsplatCamera *camera,
                                    float *rgb,
                                    size_t len);

// Resolves a query embedding (`dim` floats, unit norm) against the scene as
// seen from `camera`. Labels with relevancy strictly above `threshold` are
// ranked in `*out`.
//
// # Safety
// `scene` must be a live handle, `prompt` a NUL-terminated string,
// `embedding` readable for `dim` floats, `camera` readable and `out`
// writable.
enum SemsplatStatus semsplat_query(const struct SemsplatScene *scene,
                                   const char *prompt,
                                   const float *embedding,
                                   size_t dim,
                                   const struct SemsplatCamera *camera,
                                   double threshold,
                                   struct SemsplatQuery **out);

// Releases a query result. Null is ignored.
//
// # Safety
// `query` must be null or a handle not yet freed.
void semsplat_query_free(struct SemsplatQuery *query);

// Number of ranked labels.
//
// # Safety
// `query` must be a live handle and `out` a writable pointer.
enum SemsplatStatus semsplat_query_count(const struct SemsplatQuery *query, size_t *out);

// Label, relevancy and number of Gaussians of ranked entry `rank`. The
// label string lives as long as the query handle.
//
// # Safety
// `query` must be a live handle; the out pointers must be writable.
enum SemsplatStatus semsplat_query_entry(const struct SemsplatQuery *query,
                                         size_t rank,
                                         const char **label,
                                         double *relevancy,
                                         size_t *num_gaussians);

// Writes the pixel mask of entry `rank` as 0/1 bytes (`width × height`).
//
// # Safety
// `query` must be a live handle and `mask` writable for `len` bytes.
enum SemsplatStatus semsplat_query_mask(const struct SemsplatQuery *query,
                                        size_t rank,
                                        uint8_t *mask,
                                        size_t len);

// Sets the view-independent color of every Gaussian of `label`. The count
// of edited Gaussians goes to `*affected` when it is not null.
//
// # Safety
// `scene` must be a live handle and `label` a NUL-terminated string.
enum SemsplatStatus semsplat_edit_recolor(struct SemsplatScene *scene,
                                          const char *label,
                                          float r,
                                          float g,
                                          float b,
                                          size_t *affected);

// Removes every Gaussian of `label`.
//
// # Safety
// `scene` must be a live handle and `label` a NUL-terminated string.
enum SemsplatStatus semsplat_edit_delete(struct SemsplatScene *scene,
                                         const char *label,
                                         size_t *affected);

// Moves every Gaussian of `label` by `(dx, dy, dz)` in world units.
//
// # Safety
// `scene` must be a live handle and `label` a NUL-terminated string.
enum SemsplatStatus semsplat_edit_translate(struct SemsplatScene *scene,
                                            const char *label,
                                            float dx,
                                            float dy,
                                            float dz,
                                            size_t *affected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMSPLAT_H */

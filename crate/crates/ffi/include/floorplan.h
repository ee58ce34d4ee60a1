#ifndef FLOORPLAN_H
#define FLOORPLAN_H

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum FpStatus {
  FP_STATUS_OK = 0,
  // A required pointer argument was null.
  FP_STATUS_NULL_POINTER = 1,
  FP_STATUS_INVALID_INPUT = 2,
  FP_STATUS_IO = 3,
  // A pipeline stage failed on valid input.
  FP_STATUS_STAGE = 4,
  // The output buffer is too small; the required size was reported.
  FP_STATUS_BUFFER_TOO_SMALL = 5,
  FP_STATUS_PANIC = 6,
} FpStatus;

// Pipeline configuration handle.
typedef struct FpConfig FpConfig;

// Region adjacency graph handle.
typedef struct FpGraph FpGraph;

// Grayscale image handle.
typedef struct FpImage FpImage;

// Trained classifier handle.
typedef struct FpModel FpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version string of the library, statically allocated.
const char *fp_version(void);

// Copies the last error message of the calling thread into `buf`,
// NUL-terminated and truncated to `capacity`. Returns the full message
// length excluding the terminator, or 0 if there is no error.
//
// # Safety
// `buf` must be null or point to `capacity` writable bytes.
size_t fp_last_error_message(char *buf, size_t capacity);

// Creates a configuration with default values.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum FpStatus fp_config_new_default(struct FpConfig **out);

// Parses and validates a JSON configuration. Missing fields take defaults.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum FpStatus fp_config_from_json(const char *json, struct FpConfig **out);

// Serializes a configuration to JSON. Release the string with
// [`fp_string_free`].
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum FpStatus fp_config_to_json(const struct FpConfig *cfg, char **out);

// # Safety
// `cfg` must be null or a handle from this library not yet freed.
void fp_config_free(struct FpConfig *cfg);

// Loads a grayscale image (PNG or PGM) from disk.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum FpStatus fp_image_load(const char *path, struct FpImage **out);

// Copies `width * height` row-major 8-bit pixels into a new image.
//
// # Safety
// `pixels` must point to `width * height` readable bytes.
enum FpStatus fp_image_from_gray(const uint8_t *pixels,
                                 size_t width,
                                 size_t height,
                                 struct FpImage **out);

// Reports the image size.
//
// # Safety
// `img` must be a live handle; `width` and `height` valid pointers.
enum FpStatus fp_image_size(const struct FpImage *img, size_t *width, size_t *height);

// # Safety
// `img` must be null or a handle from this library not yet freed.
void fp_image_free(struct FpImage *img);

// Preprocesses the image and builds its unlabeled region graph.
//
// # Safety
// `img` and `cfg` must be live handles and `out` a valid pointer.
enum FpStatus fp_build_rag(const struct FpImage *img,
                           const struct FpConfig *cfg,
                           struct FpGraph **out);

// Parses a graph previously written with [`fp_graph_to_json`].
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum FpStatus fp_graph_from_json(const char *json, struct FpGraph **out);

// # Safety
// `g` must be a live handle and `out` a valid pointer.
enum FpStatus fp_graph_node_count(const struct FpGraph *g, size_t *out);

// # Safety
// `g` must be a live handle and `out` a valid pointer.
enum FpStatus fp_graph_edge_count(const struct FpGraph *g, size_t *out);

// Serializes the graph to JSON. Release the string with [`fp_string_free`].
//
// # Safety
// `g` must be a live handle and `out` a valid pointer.
enum FpStatus fp_graph_to_json(const struct FpGraph *g, char **out);

// Labels every node of the graph with the model's prediction.
//
// # Safety
// `g` and `model` must be live handles.
enum FpStatus fp_graph_predict(struct FpGraph *g, const struct FpModel *model);

// Runs post-processing on a fully labeled graph. The room connectivity
// graph and the wall segments are returned as JSON strings; either output
// pointer may be null when not needed.
//
// # Safety
// `g` and `cfg` must be live handles; outputs null or valid pointers.
enum FpStatus fp_postprocess(const struct FpGraph *g,
                             const struct FpConfig *cfg,
                             char **rcg_out,
                             char **walls_out);

// # Safety
// `g` must be null or a handle from this library not yet freed.
void fp_graph_free(struct FpGraph *g);

// Parses a trained model from JSON.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum FpStatus fp_model_from_json(const char *json, struct FpModel **out);

// # Safety
// `model` must be null or a handle from this library not yet freed.
void fp_model_free(struct FpModel *model);

// # Safety
// `s` must be null or a string returned by this library not yet freed.
void fp_string_free(char *s);

// Invariant ratio `A / (π r²)` of the simple polygon given as `n_points`
// interleaved `x, y` pairs.
//
// # Safety
// `xy` must point to `2 * n_points` readable doubles and `out` be valid.
enum FpStatus fp_invariant_ratio(const double *xy, size_t n_points, double *out);

// Normalized Zernike amplitudes of a simple polygon, using the Zernike
// settings of `cfg`. `written` always receives the feature count; when it
// exceeds `capacity` nothing is copied and
// [`FpStatus::BufferTooSmall`] is returned.
//
// # Safety
// `xy` must point to `2 * n_points` readable doubles, `out` to `capacity`
// writable doubles (or be null when `capacity` is 0), `written` be valid.
enum FpStatus fp_zernike_features(const double *xy,
                                  size_t n_points,
                                  const struct FpConfig *cfg,
                                  double *out,
                                  size_t capacity,
                                  size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOORPLAN_H */

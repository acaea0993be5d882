/* herdscope C interface. Every call returns an hs_status; on failure
 * hs_last_error() describes the problem for the calling thread. Strings
 * returned through char** are owned by the caller and released with
 * hs_string_free. */
#ifndef HERDSCOPE_H
#define HERDSCOPE_H

#include <stddef.h>
#include <stdint.h>

#if defined(HERDSCOPE_BUILDING_LIBRARY)
#define HS_API __attribute__((visibility("default")))
#else
#define HS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hs_status {
  HS_OK = 0,
  HS_ERR_INVALID_ARGUMENT = 1,
  HS_ERR_CONFIG = 2,
  HS_ERR_DATA = 3,
  HS_ERR_STAGE_FAILURE = 4,
  HS_ERR_IO = 5,
  HS_ERR_ADAPTER = 6,
  HS_ERR_NUMERIC = 7,
  HS_ERR_INTERNAL = 8
} hs_status;

HS_API const char* hs_version(void);
HS_API const char* hs_last_error(void);
HS_API const char* hs_status_name(hs_status status);
HS_API void hs_string_free(char* s);

/* ---- images ---- */
typedef struct hs_image hs_image;

HS_API hs_status hs_image_create(int width, int height, int channels, const uint8_t* data,
                                 hs_image** out);
HS_API hs_status hs_image_load(const char* path, hs_image** out);
HS_API hs_status hs_image_save(const hs_image* img, const char* path);
HS_API void hs_image_free(hs_image* img);
HS_API int hs_image_width(const hs_image* img);
HS_API int hs_image_height(const hs_image* img);
HS_API int hs_image_channels(const hs_image* img);
HS_API const uint8_t* hs_image_data(const hs_image* img);

HS_API hs_status hs_resample_bicubic(const hs_image* img, int width, int height, hs_image** out);
HS_API hs_status hs_degrade(const hs_image* img, int factor, hs_image** out);
HS_API hs_status hs_psnr(const hs_image* a, const hs_image* b, double* out);

/* sr_json: {"backend": "bicubic"|"toy-han"|"external", "han": {...},
 * "adapter": {...}}, the "sr" section of a pipeline config. Relative paths
 * resolve against base_dir (may be NULL for the working directory). */
HS_API hs_status hs_upscale(const hs_image* img, int scale, const char* sr_json,
                            const char* base_dir, uint64_t seed, hs_image** out);

/* ---- tiling and detections ---- */
typedef struct hs_tile_origin {
  int x;
  int y;
} hs_tile_origin;

HS_API hs_status hs_plan_tiles(int frame_w, int frame_h, int tile_size, int overlap,
                               hs_tile_origin** tiles, size_t* count);
HS_API void hs_tiles_free(hs_tile_origin* tiles);
HS_API hs_status hs_extract_tile(const hs_image* frame, hs_tile_origin origin, int tile_size,
                                 hs_image** out);

typedef struct hs_detection {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
  double confidence;
  int class_id;
} hs_detection;

HS_API void hs_detections_free(hs_detection* dets);
HS_API hs_status hs_detect_blobs(const hs_image* patch, double threshold, int min_area,
                                 hs_detection** out, size_t* count);
HS_API hs_status hs_remap_detections(const hs_detection* dets, size_t count,
                                     hs_tile_origin origin, double scale, hs_detection** out,
                                     size_t* out_count);
HS_API hs_status hs_merge_detections(const hs_detection* dets, size_t count, double nms_iou,
                                     hs_detection** out, size_t* out_count);
HS_API hs_status hs_scale_prior_filter(const hs_detection* dets, size_t count, double altitude_m,
                                       double focal_length_m, double pixel_pitch_m,
                                       double animal_extent_m, double k_lo, double k_hi,
                                       hs_detection** out, size_t* out_count);

/* ---- metrics ---- */
/* criterion: "iou" or "chebyshev". Boxes are x_min, y_min, x_max, y_max. */
HS_API hs_status hs_match_count(const hs_detection* dets, size_t n_dets, const double* gt_boxes,
                                size_t n_gt, const char* criterion, double threshold, int* tp);
HS_API double hs_chebyshev(const double* box_a, const double* box_b);

/* ---- pipeline ----
 * config_path: pipeline config JSON (or a report carrying one).
 * overrides_json: optional JSON merge patch applied on top (may be NULL). */
HS_API hs_status hs_config_resolve(const char* config_path, const char* overrides_json,
                                   char** resolved_json);
HS_API hs_status hs_run(const char* config_path, const char* overrides_json,
                        const char* out_dir, char** report_json, int* failed);
HS_API hs_status hs_tile(const char* config_path, const char* overrides_json,
                         const char* out_dir, char** summary_json);
/* tiles_index may be NULL to tile frames in memory. Writes detections CSV. */
HS_API hs_status hs_detect(const char* config_path, const char* overrides_json,
                           const char* tiles_index, const char* detections_csv,
                           char** summary_json);
HS_API hs_status hs_evaluate(const char* config_path, const char* overrides_json,
                             const char* detections_csv, char** report_json);

/* reports_json: a JSON array of report documents. formats: comma list of
 * json, markdown, csv, svg. written_json receives an array of paths. */
HS_API hs_status hs_emit_report(const char* reports_json, const char* out_dir,
                                const char* formats, char** written_json);

/* ---- data ---- */
/* preset: "savmap-like" or "aed-like"; overrides_json may set scene fields. */
HS_API hs_status hs_synth(const char* preset, int n_frames, uint64_t seed,
                          const char* overrides_json, const char* out_dir, char** summary_json);
/* request_json: {"images": dir, "annotations": csv, "format": "boxes"|"centers",
 * "box_size": n, "altitude": csv, "camera": {...}} */
HS_API hs_status hs_ingest(const char* request_json, const char* out_manifest,
                           char** summary_json);

HS_API hs_status hs_grad_check(uint64_t seed, char** result_json);

#ifdef __cplusplus
}
#endif

#endif

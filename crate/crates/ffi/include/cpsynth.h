#ifndef CPSYNTH_H
#define CPSYNTH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpsStatus {
  CPS_STATUS_OK = 0,
  CPS_STATUS_NULL_POINTER = 1,
  CPS_STATUS_INVALID_UTF8 = 2,
  CPS_STATUS_IO = 3,
  CPS_STATUS_PARSE = 4,
  CPS_STATUS_VALIDATION = 5,
  CPS_STATUS_RUNTIME = 6,
} CpsStatus;

/*
 A loaded COCO dataset.
 */
typedef struct CpsDataset CpsDataset;

/*
 A loaded list of scored detections.
 */
typedef struct CpsDetections CpsDetections;

/*
 Result of [`cps_evaluate`].
 */
typedef struct CpsEvalReport CpsEvalReport;

/*
 Axis-aligned box: top-left corner plus width and height, in pixels.
 */
typedef struct CpsBox {
  double x;
  double y;
  double w;
  double h;
} CpsBox;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread; empty if none. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *cps_last_error(void);

/*
 Library version as a static string.
 */
const char *cps_version(void);

/*
 Intersection over union of two boxes.

 # Safety
 `a` and `b` must point to valid boxes; `out` must be writable.
 */
enum CpsStatus cps_iou(const struct CpsBox *a, const struct CpsBox *b, double *out);

/*
 Tight box of a row-major mask (non-zero bytes are foreground).

 # Safety
 `data` must hold `width * height` bytes; `out` must be writable.
 */
enum CpsStatus cps_mask_tight_bbox(const uint8_t *data,
                                   uint32_t width,
                                   uint32_t height,
                                   struct CpsBox *out);

/*
 Whether a mask's tight box covers the frame closely enough to count as
 background, under the default annotation rules.

 # Safety
 `data` must hold `width * height` bytes; `out` must be writable.
 */
enum CpsStatus cps_mask_is_background(const uint8_t *data,
                                      uint32_t width,
                                      uint32_t height,
                                      bool *out);

/*
 Loads a COCO file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CpsStatus cps_dataset_load(const char *path, struct CpsDataset **out);

/*
 Writes a dataset as COCO JSON.

 # Safety
 `dataset` must come from [`cps_dataset_load`]; `path` must be a
 NUL-terminated string.
 */
enum CpsStatus cps_dataset_save(const struct CpsDataset *dataset, const char *path);

/*
 Number of images; 0 for a null handle.

 # Safety
 `dataset` must be null or come from [`cps_dataset_load`].
 */
size_t cps_dataset_image_count(const struct CpsDataset *dataset);

/*
 Number of annotated objects; 0 for a null handle.

 # Safety
 `dataset` must be null or come from [`cps_dataset_load`].
 */
size_t cps_dataset_object_count(const struct CpsDataset *dataset);

/*
 # Safety
 `dataset` must be null or come from [`cps_dataset_load`], and not be used
 afterwards.
 */
void cps_dataset_free(struct CpsDataset *dataset);

/*
 Loads a COCO results file (a JSON array of scored boxes).

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CpsStatus cps_detections_load(const char *path, struct CpsDetections **out);

/*
 Number of detections; 0 for a null handle.

 # Safety
 `detections` must be null or come from [`cps_detections_load`].
 */
size_t cps_detections_count(const struct CpsDetections *detections);

/*
 # Safety
 `detections` must be null or come from [`cps_detections_load`], and not
 be used afterwards.
 */
void cps_detections_free(struct CpsDetections *detections);

/*
 Evaluates detections against ground truth with the default settings
 (AP at IoU 0.50, FP_N at confidence 0.10, confusion matrix at 0.25/0.45).
 Images in the `negative` split feed FP_N only.

 # Safety
 `gt` and `detections` must be valid handles; `out` must be writable.
 */
enum CpsStatus cps_evaluate(const struct CpsDataset *gt,
                            const struct CpsDetections *detections,
                            struct CpsEvalReport **out);

/*
 Mean AP at IoU 0.50 over classes with ground truth; NaN when no class
 has any (or for a null handle).

 # Safety
 `report` must be null or come from [`cps_evaluate`].
 */
double cps_eval_report_ap50(const struct CpsEvalReport *report);

/*
 False positives per negative image; NaN when the dataset has no
 negative images (or for a null handle).

 # Safety
 `report` must be null or come from [`cps_evaluate`].
 */
double cps_eval_report_fp_n(const struct CpsEvalReport *report);

/*
 The full report as JSON; free with [`cps_string_free`]. Null on failure.

 # Safety
 `report` must be null or come from [`cps_evaluate`].
 */
char *cps_eval_report_to_json(const struct CpsEvalReport *report);

/*
 # Safety
 `report` must be null or come from [`cps_evaluate`], and not be used
 afterwards.
 */
void cps_eval_report_free(struct CpsEvalReport *report);

/*
 # Safety
 `s` must be null or a string returned by this library, freed once.
 */
void cps_string_free(char *s);

/*
 Runs the `synth` command: loads the config file and writes the image
 set into `out_dir`. A null `out_dir` falls back to the config's output path.

 # Safety
 `config_path` must be a NUL-terminated string; `out_dir` must be null or
 one.
 */
enum CpsStatus cps_synth_run(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPSYNTH_H */

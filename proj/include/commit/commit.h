/*
 * C interface to the certification engine.
 *
 * Every function returns a commit_status. On failure the message for the
 * calling thread is available from commit_last_error() until the next call
 * on that thread. Objects are opaque handles released with their _free
 * function; passing NULL to a _free function is a no-op.
 */
#ifndef COMMIT_COMMIT_H
#define COMMIT_COMMIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(COMMIT_BUILDING_LIBRARY)
#define COMMIT_API __attribute__((visibility("default")))
#else
#define COMMIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum commit_status
{
    COMMIT_OK = 0,
    COMMIT_INVALID_ARGUMENT = 1,
    COMMIT_PARSE = 2,
    COMMIT_IO = 3,
    COMMIT_DETECTOR_PROTOCOL = 4,
    COMMIT_DETECTOR_TIMEOUT = 5,
    COMMIT_DETECTOR_DIED = 6,
    COMMIT_INTERNAL = 7
} commit_status;

typedef enum commit_transform
{
    COMMIT_ROTATION = 0,
    COMMIT_SHIFTING = 1
} commit_transform;

typedef struct commit_scene commit_scene;
typedef struct commit_detector commit_detector;

/* Box: bottom-center (x, y, z), size (w, h, l), heading r in radians. */
typedef struct commit_box
{
    double x, y, z, w, h, l, r;
} commit_box;

typedef struct commit_detection
{
    commit_box box;
    /* Truncated to 31 characters. */
    char label[32];
    double score;
} commit_detection;

typedef struct commit_smoothing
{
    double sigma_x;
    double sigma_p;
    size_t samples;
    double alpha;
    uint64_t seed;
} commit_smoothing;

/* Certification over [lo, hi] split into `cells` equal cells. */
typedef struct commit_certify_request
{
    commit_transform transform;
    double lo;
    double hi;
    size_t cells;
    commit_smoothing smoothing;
    double eta;
    /* Worker cap; 0 = all cores. */
    size_t threads;
} commit_certify_request;

typedef struct commit_detection_result
{
    double certified_lo;
    double empirical_hi;
    double median_clean;
    int detected;
    size_t uncertifiable_cells;
} commit_detection_result;

typedef struct commit_iou_result
{
    double certified_iou;
    size_t uncertifiable_cells;
    commit_box gt;
} commit_iou_result;

typedef struct commit_attack_result
{
    double worst_confidence;
    double argmin_confidence;
    double worst_iou;
    double argmin_iou;
    size_t evaluations;
} commit_attack_result;

typedef struct commit_partition_row
{
    double size;
    size_t pairs;
    size_t image_violations;
    size_t point_violations;
    double max_image_ratio;
    double max_point_ratio;
    double mean_image_ratio;
    double mean_point_ratio;
} commit_partition_row;

typedef struct commit_interval
{
    double lo;
    double hi;
} commit_interval;

typedef struct commit_sweep_row
{
    commit_interval radius;
    size_t cells;
    double certified_detection;
    double certified_iou;
    double empirical_confidence;
    double empirical_iou;
    double clean_confidence;
    double clean_iou;
} commit_sweep_row;

COMMIT_API const char* commit_last_error(void);
COMMIT_API const char* commit_status_name(commit_status status);
COMMIT_API const char* commit_version(void);

COMMIT_API void commit_smoothing_defaults(commit_smoothing* out);

/* Synthetic scene; randomize != 0 also draws the vehicle pose and size. */
COMMIT_API commit_status commit_scene_generate(uint64_t seed, int randomize,
                                               commit_scene** out);
COMMIT_API commit_status commit_scene_load(const char* path, commit_scene** out);
COMMIT_API commit_status commit_scene_save(const commit_scene* scene, const char* path);
COMMIT_API commit_status commit_scene_ground_truth(const commit_scene* scene,
                                                   commit_box* out);
COMMIT_API commit_status commit_scene_point_count(const commit_scene* scene, size_t* out);
COMMIT_API commit_status commit_scene_transform(const commit_scene* scene,
                                                commit_transform transform, double param,
                                                commit_scene** out);
COMMIT_API void commit_scene_free(commit_scene* scene);

COMMIT_API commit_status commit_detector_builtin(commit_detector** out);
/* Child process run through /bin/sh; pool_size handles serve requests. */
COMMIT_API commit_status commit_detector_external(const char* command, double timeout_s,
                                                  size_t pool_size, commit_detector** out);
/* Writes up to `capacity` detections; *count receives the total number. */
COMMIT_API commit_status commit_detector_detect(commit_detector* detector,
                                                const commit_scene* scene,
                                                commit_detection* out, size_t capacity,
                                                size_t* count);
COMMIT_API void commit_detector_free(commit_detector* detector);

COMMIT_API commit_status commit_certify_detection(commit_detector* detector,
                                                  const commit_scene* scene,
                                                  const commit_certify_request* request,
                                                  commit_detection_result* out);
COMMIT_API commit_status commit_certify_iou(commit_detector* detector,
                                            const commit_scene* scene,
                                            const commit_certify_request* request,
                                            commit_iou_result* out);
/* Smoothed evaluation at lo + i * step, i = 0 .. floor((hi - lo) / step). */
COMMIT_API commit_status commit_attack(commit_detector* detector, const commit_scene* scene,
                                       commit_transform transform, double lo, double hi,
                                       double step, const commit_smoothing* smoothing,
                                       size_t threads, commit_attack_result* out);
/* Smoothed confidence and IoU of the untransformed scene. */
COMMIT_API commit_status commit_clean_values(commit_detector* detector,
                                             const commit_scene* scene,
                                             const commit_smoothing* smoothing,
                                             size_t threads, double* confidence,
                                             double* iou);

/* Writes one row per interval size into rows[0 .. n_sizes). */
COMMIT_API commit_status commit_check_partition(const commit_scene* scene,
                                                commit_transform transform, double lo,
                                                double hi, double tau, const double* sizes,
                                                size_t n_sizes, size_t pairs, uint64_t seed,
                                                commit_partition_row* rows);

/*
 * Certifies the hull of the radii once, on cells of width cell_width, attacks
 * it at attack_step, and reports each radius from the cells and attack points
 * it contains. Every radius must be a union of cells.
 */
COMMIT_API commit_status commit_benchmark(commit_detector* detector,
                                          const commit_scene* scene,
                                          commit_transform transform,
                                          const commit_interval* radii, size_t n_radii,
                                          double cell_width, double attack_step,
                                          const commit_smoothing* smoothing, size_t threads,
                                          commit_sweep_row* rows);

COMMIT_API commit_status commit_exact_iou(const commit_box* a, const commit_box* b,
                                          double* out);
/* Lower bound on the IoU with gt of any box inside [lo, hi]. */
COMMIT_API commit_status commit_iou_lower_bound(const commit_box* lo, const commit_box* hi,
                                                const commit_box* gt, double* out);

#ifdef __cplusplus
}
#endif

#endif /* COMMIT_COMMIT_H */

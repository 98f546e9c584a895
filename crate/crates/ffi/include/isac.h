#ifndef ISAC_H
#define ISAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IsacStatus {
  ISAC_STATUS_OK = 0,
  ISAC_STATUS_NULL_POINTER = 1,
  ISAC_STATUS_INVALID_CONFIG = 2,
  ISAC_STATUS_INFEASIBLE = 3,
  ISAC_STATUS_NUMERICAL = 4,
  ISAC_STATUS_BUFFER_TOO_SMALL = 5,
  ISAC_STATUS_PANIC = 6,
} IsacStatus;

typedef enum IsacStrategy {
  ISAC_STRATEGY_PROP = 0,
  ISAC_STRATEGY_EVEN = 1,
  ISAC_STRATEGY_HEU = 2,
} IsacStrategy;

/**
 * A finished design: partition, beamformer and its BCRB.
 */
typedef struct IsacDesign IsacDesign;

/**
 * A validated scenario with its channel realizations.
 */
typedef struct IsacScene IsacScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a scene from a NUL-terminated JSON scenario.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum IsacStatus isac_scene_from_json(const char *json, struct IsacScene **out);

/**
 * Releases a scene. Null is ignored.
 *
 * # Safety
 * `scene` must come from [`isac_scene_from_json`] and not be used afterwards.
 */
void isac_scene_free(struct IsacScene *scene);

/**
 * Number of antennas `N`.
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum IsacStatus isac_scene_antennas(const struct IsacScene *scene, size_t *out);

/**
 * Number of angle parameters (targets, or 2 for an extended target).
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum IsacStatus isac_scene_num_angles(const struct IsacScene *scene, size_t *out);

/**
 * Designs a partition and beamformer with the scenario's design settings.
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum IsacStatus isac_design(const struct IsacScene *scene,
                            enum IsacStrategy strategy,
                            struct IsacDesign **out);

/**
 * Releases a design. Null is ignored.
 *
 * # Safety
 * `design` must come from [`isac_design`] and not be used afterwards.
 */
void isac_design_free(struct IsacDesign *design);

/**
 * Copies the partition (`1` = transmit) into `out[0..N]`.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum IsacStatus isac_design_partition(const struct IsacDesign *design, double *out, size_t len);

/**
 * Mean root BCRB over the angle parameters, in degrees.
 *
 * # Safety
 * `design` must be a live handle and `out` a valid pointer.
 */
enum IsacStatus isac_design_root_bcrb_deg(const struct IsacDesign *design, double *out);

/**
 * Shape of `W` (`N x (N + K)`).
 *
 * # Safety
 * `rows` and `cols` must be valid pointers.
 */
enum IsacStatus isac_design_beamformer_shape(const struct IsacDesign *design,
                                             size_t *rows,
                                             size_t *cols);

/**
 * Copies `W` row-major into `re` and `im`, each of `len >= rows * cols`.
 *
 * # Safety
 * `re` and `im` must each point to `len` writable doubles.
 */
enum IsacStatus isac_design_beamformer(const struct IsacDesign *design,
                                       double *re,
                                       double *im,
                                       size_t len);

/**
 * Monte Carlo MAP estimation for a design; writes the mean per-parameter
 * RMSE in degrees.
 *
 * # Safety
 * Both handles must be live, `design` made from `scene`, and `rmse_deg` valid.
 */
enum IsacStatus isac_monte_carlo(const struct IsacScene *scene,
                                 const struct IsacDesign *design,
                                 size_t trials,
                                 uint64_t seed,
                                 double *rmse_deg);

/**
 * Copies the calling thread's last error message, NUL-terminated, into
 * `buf`. With a null `buf`, writes the required size (including the NUL)
 * to `needed` and returns `Ok`.
 *
 * # Safety
 * `buf` must point to `len` writable bytes; `needed` may be null.
 */
enum IsacStatus isac_last_error(char *buf, size_t len, size_t *needed);

/**
 * Library version as a static NUL-terminated string.
 */
const char *isac_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISAC_H */

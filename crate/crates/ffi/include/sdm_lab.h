#ifndef SDM_LAB_H
#define SDM_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.  `SDM_STATUS_OK` is zero; everything else is an error.
 */
typedef enum SdmStatus {
  SDM_STATUS_OK = 0,
  SDM_STATUS_NULL_POINTER = 1,
  SDM_STATUS_DIMENSION = 2,
  SDM_STATUS_DOMAIN = 3,
  SDM_STATUS_NUMERIC = 4,
  SDM_STATUS_DEGENERATE = 5,
  SDM_STATUS_RESOURCE = 6,
  SDM_STATUS_FORMAT = 7,
  SDM_STATUS_CONFIG = 8,
  SDM_STATUS_IO = 9,
  SDM_STATUS_BUFFER_TOO_SMALL = 10,
  SDM_STATUS_PANIC = 11,
} SdmStatus;

/**
 * Which optimality criterion `sdm_optimal_d` evaluates.
 */
typedef enum SdmCriterion {
  SDM_CRITERION_SNR = 0,
  SDM_CRITERION_MEMORY = 1,
  SDM_CRITERION_CRITICAL_DISTANCE = 2,
} SdmCriterion;

/**
 * Engine kinds, in the same order as the library's `EngineKind::ALL`.
 */
typedef enum SdmEngineKind {
  SDM_ENGINE_KIND_BINARY_SDM = 0,
  SDM_ENGINE_KIND_BINARY_SDM_LIMITED_NEURONS = 1,
  SDM_ENGINE_KIND_BINARY_NEURON_SDM = 2,
  SDM_ENGINE_KIND_BINARY_SDM_BINARY_FIT_ATTENTION = 3,
  SDM_ENGINE_KIND_CONTINUOUS_BINARY_SDM = 4,
  SDM_ENGINE_KIND_CONTINUOUS_SDM = 5,
  SDM_ENGINE_KIND_CONTINUOUS_SDM_BINARY_FIT_ATTENTION = 6,
  SDM_ENGINE_KIND_CONTINUOUS_SDM_CONTINUOUS_FIT_ATTENTION = 7,
} SdmEngineKind;

/**
 * Opaque read/update engine with its own random stream.
 */
typedef struct SdmEngine SdmEngine;

/**
 * Opaque stored-pattern collection (binary or unit-norm dense).
 */
typedef struct SdmPatterns SdmPatterns;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdm_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * always NUL-terminated when `len > 0`).  Returns the length the full
 * message needs including the terminator, or 0 if there is no error.
 *
 * # Safety
 * `buf` must be null or valid for writes of `len` bytes.
 */
size_t sdm_last_error_message(char *buf, size_t len);

/**
 * Natural log of the number of points within Hamming distance `d` of two
 * points `d_v` apart in `{0,1}^n` (`-inf` when the circles are disjoint).
 *
 * # Safety
 * `out_log` must be valid for a write.
 */
enum SdmStatus sdm_binary_circle_intersection(size_t n, size_t d, size_t d_v, double *out_log);

/**
 * Expected number of neurons (out of `r` uniformly placed) in the
 * intersection.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SdmStatus sdm_expected_neurons(size_t n, size_t d, size_t d_v, double r, double *out);

/**
 * Softmax β fitted to the binary (`continuous == 0`) or hyperspherical
 * (`continuous != 0`) intersection at radius `d`.  Any output pointer may
 * be null.
 *
 * # Safety
 * Non-null output pointers must be valid for writes.
 */
enum SdmStatus sdm_fit_beta(size_t d,
                            size_t n,
                            int32_t continuous,
                            double *out_beta,
                            double *out_intercept,
                            double *out_r_squared);

/**
 * Optimal Hamming radius and fraction of space under `criterion`.
 * `retrieval_prob` is used by the memory criterion only.
 *
 * # Safety
 * `out_d` and `out_p` must be valid for writes.
 */
enum SdmStatus sdm_optimal_d(enum SdmCriterion criterion,
                             size_t n,
                             size_t m,
                             double r,
                             double retrieval_prob,
                             size_t *out_d,
                             double *out_p);

/**
 * Largest query distance from which the expected read still moves toward
 * the target.
 *
 * # Safety
 * `out` must be valid for a write.
 */
enum SdmStatus sdm_critical_distance(size_t d, size_t n, size_t m, double r, size_t *out);

/**
 * Creates an autoassociative store of `m` binary patterns of dimension `n`
 * from a row-major `m × n` array of 0/1 values.
 *
 * # Safety
 * `bits` must be valid for reads of `m * n` elements; `out` for a write.
 */
enum SdmStatus sdm_patterns_new_binary(const double *bits,
                                       size_t m,
                                       size_t n,
                                       struct SdmPatterns **out);

/**
 * Creates a store of `m` dense patterns.  Addresses (`m × n`, row-major)
 * are normalized to unit length.  `pointers` may be null for an
 * autoassociative store; otherwise it holds `m × pointer_dim` values
 * returned as-is by reads.
 *
 * # Safety
 * `addresses` must be valid for `m * n` reads, non-null `pointers` for
 * `m * pointer_dim` reads, and `out` for a write.
 */
enum SdmStatus sdm_patterns_new_dense(const double *addresses,
                                      size_t m,
                                      size_t n,
                                      const double *pointers,
                                      size_t pointer_dim,
                                      struct SdmPatterns **out);

/**
 * Releases a pattern store.  Engines built from it stay valid.
 *
 * # Safety
 * `patterns` must be null or a pointer returned by an `sdm_patterns_new_*`
 * function that has not been freed.
 */
void sdm_patterns_free(struct SdmPatterns *patterns);

/**
 * Builds an engine of `kind` reading from `patterns`.  `r` is the neuron
 * count; pass a non-positive or non-finite value for the unbounded case
 * (the limited and explicit-neuron kinds require a finite `r`).
 *
 * # Safety
 * `patterns` must be a live pattern handle and `out` valid for a write.
 */
enum SdmStatus sdm_engine_new(enum SdmEngineKind kind,
                              size_t d,
                              double r,
                              const struct SdmPatterns *patterns,
                              uint64_t seed,
                              struct SdmEngine **out);

/**
 * Releases an engine.
 *
 * # Safety
 * `engine` must be null or a live handle from [`sdm_engine_new`].
 */
void sdm_engine_free(struct SdmEngine *engine);

/**
 * Dimension of the vectors an engine's reads return.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
size_t sdm_engine_output_dim(const struct SdmEngine *engine);

/**
 * One read.  `query` has the engine's address dimension; `out` receives
 * `sdm_engine_output_dim` values.  `out_no_intersection` (may be null) is
 * set to 1 when nothing intersected the query.
 *
 * # Safety
 * `engine` must be a live handle, `query` valid for `query_len` reads and
 * `out` for `out_len` writes.
 */
enum SdmStatus sdm_engine_update(struct SdmEngine *engine,
                                 const double *query,
                                 size_t query_len,
                                 double *out,
                                 size_t out_len,
                                 int32_t *out_no_intersection);

/**
 * Iterates reads from `query` until a fixed point, a read with no
 * intersection, or `max_iters` steps.  Only autoassociative stores can be
 * iterated.  `out` receives the final state; `out_steps` and
 * `out_converged` may be null.
 *
 * # Safety
 * As for [`sdm_engine_update`].
 */
enum SdmStatus sdm_engine_converge(struct SdmEngine *engine,
                                   const double *query,
                                   size_t query_len,
                                   size_t max_iters,
                                   double *out,
                                   size_t out_len,
                                   size_t *out_steps,
                                   int32_t *out_converged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDM_LAB_H */

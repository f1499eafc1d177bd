#ifndef PQC_H
#define PQC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum PqcStatus {
  PQC_STATUS_OK = 0,
  PQC_STATUS_NULL_POINTER = 1,
  PQC_STATUS_INVALID_ARGUMENT = 2,
  PQC_STATUS_PARSE = 3,
  PQC_STATUS_IO = 4,
  PQC_STATUS_OUT_OF_DOMAIN = 5,
  PQC_STATUS_DUPLICATE = 6,
  PQC_STATUS_CORRUPT = 7,
  PQC_STATUS_UNSUPPORTED = 8,
  PQC_STATUS_PANIC = 9,
} PqcStatus;

/**
 * Opaque store handle.
 */
typedef struct PqcStore PqcStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a store from `n` points packed as `n * dim` coordinates.
 * `lossless` ignores `gamma`.
 *
 * # Safety
 * `coords` must point to `n * dim` readable `u32` values (it may be null when
 * `n` is zero). `out` must be a valid location for one handle pointer.
 */
enum PqcStatus pqc_store_build(const uint32_t *coords,
                               size_t n,
                               uint8_t dim,
                               uint32_t width,
                               uint32_t gamma,
                               bool lossless,
                               struct PqcStore **out);

/**
 * Loads a PQC1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string. `out` must be a valid location for
 * one handle pointer.
 */
enum PqcStatus pqc_store_open(const char *path, struct PqcStore **out);

/**
 * Writes the store as a PQC1 file.
 *
 * # Safety
 * `store` must be a live handle and `path` a NUL-terminated string.
 */
enum PqcStatus pqc_store_save(const struct PqcStore *store, const char *path);

/**
 * Number of stored points.
 *
 * # Safety
 * `store` must be a live handle and `out` writable.
 */
enum PqcStatus pqc_store_len(const struct PqcStore *store, size_t *out);

/**
 * Point dimension of the store.
 *
 * # Safety
 * `store` must be a live handle and `out` writable.
 */
enum PqcStatus pqc_store_dim(const struct PqcStore *store, uint8_t *out);

/**
 * The point of Morton rank `rank` and its leaf height.
 *
 * # Safety
 * `store` must be a live handle, `coords_out` must have room for `dim`
 * values and `height_out` must be writable or null.
 */
enum PqcStatus pqc_store_point_at(const struct PqcStore *store,
                                  size_t rank,
                                  uint32_t *coords_out,
                                  uint32_t *height_out);

/**
 * Largest uncrowded trie square containing the point.
 *
 * # Safety
 * `store` must be a live handle, `coords` must hold `dim` values,
 * `corner_out` must have room for `dim` values and `height_out` must be
 * writable.
 */
enum PqcStatus pqc_store_square_of(const struct PqcStore *store,
                                   const uint32_t *coords,
                                   uint32_t *corner_out,
                                   uint32_t *height_out);

/**
 * Rank interval `[lo, hi)` of the points inside the square with minimum
 * corner `corner` and side `2^height`.
 *
 * # Safety
 * `store` must be a live handle, `corner` must hold `dim` values and both
 * outputs must be writable.
 */
enum PqcStatus pqc_store_vertices(const struct PqcStore *store,
                                  const uint32_t *corner,
                                  uint32_t height,
                                  size_t *lo_out,
                                  size_t *hi_out);

/**
 * Inserts one point. Lossy stores require it already rounded for `height`;
 * lossless stores ignore `height`.
 *
 * # Safety
 * `store` must be a live handle not shared with another thread during the
 * call, and `coords` must hold `dim` values.
 */
enum PqcStatus pqc_store_insert(struct PqcStore *store, const uint32_t *coords, uint32_t height);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `store` must be null or a handle not yet freed.
 */
void pqc_store_free(struct PqcStore *store);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pqc_last_error(void);

/**
 * Static description of a status code; unknown codes get a generic text.
 */
const char *pqc_status_str(int32_t code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PQC_H */

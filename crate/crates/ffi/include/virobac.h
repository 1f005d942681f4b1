#ifndef VIROBAC_H
#define VIROBAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum VbStatus {
  VB_STATUS_OK = 0,
  VB_STATUS_NULL_POINTER = 1,
  VB_STATUS_INVALID_UTF8 = 2,
  VB_STATUS_IO = 3,
  VB_STATUS_DIGEST_MISMATCH = 4,
  VB_STATUS_UNSUPPORTED_VERSION = 5,
  VB_STATUS_MALFORMED_FILE = 6,
  VB_STATUS_FEATURE_LENGTH_MISMATCH = 7,
  VB_STATUS_NON_FINITE_INPUT = 8,
  VB_STATUS_BUFFER_TOO_SMALL = 9,
  VB_STATUS_INDEX_OUT_OF_RANGE = 10,
  VB_STATUS_PANIC = 99,
} VbStatus;

/**
 * A loaded, immutable model bundle.
 */
typedef struct VbModel VbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads and verifies a bundle file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VbStatus vb_model_load(const char *path, struct VbModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`vb_model_load`] and not be used afterwards.
 */
void vb_model_free(struct VbModel *model);

/**
 * Number of input features, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t vb_model_n_features(const struct VbModel *model);

/**
 * Probability of a bacterial infection for one feature vector in canonical units.
 *
 * # Safety
 * `features` must be valid for `n` doubles; `model` and `out` must be valid.
 */
enum VbStatus vb_model_predict(const struct VbModel *model,
                               const double *features,
                               size_t n,
                               double *out);

/**
 * Copies the model id into `buf`.
 *
 * # Safety
 * `model` must be a live handle and `buf` valid for `len` bytes.
 */
enum VbStatus vb_model_id(const struct VbModel *model, char *buf, size_t len);

/**
 * Copies the name of feature `index` into `buf`.
 *
 * # Safety
 * `model` must be a live handle and `buf` valid for `len` bytes.
 */
enum VbStatus vb_model_feature_name(const struct VbModel *model,
                                    size_t index,
                                    char *buf,
                                    size_t len);

/**
 * Copies the calling thread's last error message into `buf` (empty after a success).
 *
 * # Safety
 * `buf` must be valid for `len` bytes.
 */
enum VbStatus vb_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIROBAC_H */

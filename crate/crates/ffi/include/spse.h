#ifndef SPSE_H
#define SPSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. Zero is success.
 */
typedef enum SpseStatus {
  SPSE_STATUS_OK = 0,
  SPSE_STATUS_NULL_ARGUMENT = 1,
  SPSE_STATUS_INVALID_ARGUMENT = 2,
  SPSE_STATUS_IO = 3,
  SPSE_STATUS_BAD_CHECKPOINT = 4,
  SPSE_STATUS_CONFIG_MISMATCH = 5,
  SPSE_STATUS_TOO_SHORT = 6,
  SPSE_STATUS_NON_FINITE = 7,
  SPSE_STATUS_INTERNAL = 8,
} SpseStatus;

/**
 * Opaque enhancer handle.
 */
typedef struct SpseEnhancer SpseEnhancer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *spse_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *spse_last_error(void);

/**
 * Loads a checkpoint that finished training (stage hc, or pl for a model without
 * compensation) and stores a new handle in `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer to writable storage.
 */
enum SpseStatus spse_enhancer_open(const char *path, struct SpseEnhancer **out);

/**
 * Sample rate in Hz that inputs must use, or 0 for a NULL handle.
 *
 * # Safety
 * `handle` must be NULL or a live handle from [`spse_enhancer_open`].
 */
uint32_t spse_enhancer_sample_rate(const struct SpseEnhancer *handle);

/**
 * Enhances `len` samples from `input` into `output`, which must hold `len` samples too.
 * Input and output may not overlap.
 *
 * # Safety
 * `handle` must be a live handle; `input` and `output` must point to `len` readable and
 * writable floats respectively.
 */
enum SpseStatus spse_enhance(const struct SpseEnhancer *handle,
                             const float *input,
                             float *output,
                             size_t len);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `handle` must be NULL or a handle from [`spse_enhancer_open`] not yet freed.
 */
void spse_enhancer_free(struct SpseEnhancer *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPSE_H */

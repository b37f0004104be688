#ifndef FICOTS_H
#define FICOTS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FicotsStatus {
  FICOTS_STATUS_OK = 0,
  FICOTS_STATUS_NULL_POINTER = 1,
  FICOTS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The file could not be read or its contents are malformed.
   */
  FICOTS_STATUS_IO = 3,
  /**
   * A caller buffer has the wrong length; the required size has been
   * reported through the out parameter where one exists.
   */
  FICOTS_STATUS_BUFFER_SIZE = 4,
  FICOTS_STATUS_NUMERIC = 5,
  FICOTS_STATUS_PANIC = 6,
} FicotsStatus;

/**
 * A loaded checkpoint ready for inference.
 */
typedef struct FicotsModel FicotsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ficots_version(void);

/**
 * Description of the last failure on this thread, empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ficots_last_error_message(void);

/**
 * Loads a checkpoint file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FicotsStatus ficots_model_load(const char *path, struct FicotsModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`ficots_model_load`] and not be used afterwards.
 */
void ficots_model_free(struct FicotsModel *model);

/**
 * Input length, horizon, variable count and embedding width.
 *
 * # Safety
 * `model` must be a live handle; each out pointer must be valid.
 */
enum FicotsStatus ficots_model_dims(const struct FicotsModel *model,
                                    size_t *seq_len,
                                    size_t *pred_len,
                                    size_t *num_vars,
                                    size_t *d_model);

/**
 * Forecasts one window. `input` holds `seq_len x num_vars` values in the
 * units of the training file; `output` receives `pred_len x num_vars`
 * values in the same units.
 *
 * # Safety
 * `model` must be a live handle; `input` and `output` must point to at
 * least `input_len` and `output_len` doubles.
 */
enum FicotsStatus ficots_model_predict(const struct FicotsModel *model,
                                       const double *input,
                                       size_t input_len,
                                       double *output,
                                       size_t output_len);

/**
 * Token embeddings of `text` from the deterministic stub encoder, as a
 * `num_tokens x dim` matrix. `*num_tokens` is always set on success or
 * [`FicotsStatus::BufferSize`], so a first call with `out_len = 0` sizes
 * the buffer.
 *
 * # Safety
 * `text` must be NUL-terminated, `num_tokens` valid, and `out` must point
 * to `out_len` doubles (it may be null when `out_len` is 0).
 */
enum FicotsStatus ficots_stub_encode(const char *text,
                                     size_t dim,
                                     uint64_t seed,
                                     double *out,
                                     size_t out_len,
                                     size_t *num_tokens);

/**
 * 64-bit FNV-1a of the UTF-8 bytes of a rendered prompt, the key used in
 * embedding files.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` valid.
 */
enum FicotsStatus ficots_prompt_hash(const char *text, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FICOTS_H */

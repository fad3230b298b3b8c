#ifndef NLUT_H
#define NLUT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum NlutStatus {
  NLUT_STATUS_OK = 0,
  NLUT_STATUS_NULL_POINTER = 1,
  NLUT_STATUS_INVALID_UTF8 = 2,
  NLUT_STATUS_IO = 3,
  NLUT_STATUS_BAD_CHECKPOINT = 4,
  NLUT_STATUS_PARSE_ERROR = 5,
  NLUT_STATUS_INDEX_OUT_OF_RANGE = 6,
  NLUT_STATUS_INVALID_ARGUMENT = 7,
  NLUT_STATUS_NOT_INVERTIBLE = 8,
  NLUT_STATUS_PANIC = 9,
} NlutStatus;

/**
 * A 3D lattice LUT.
 */
typedef struct NlutLut NlutLut;

/**
 * A loaded model.
 */
typedef struct NlutModel NlutModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next `nlut_*` call on the same thread.
 */
const char *nlut_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nlut_version(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum NlutStatus nlut_model_load(const char *path, struct NlutModel **out);

/**
 * Loads a checkpoint from memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` be writable.
 */
enum NlutStatus nlut_model_load_bytes(const uint8_t *data, size_t len, struct NlutModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a `nlut_model_load*` call and not be used again.
 */
void nlut_model_free(struct NlutModel *model);

/**
 * Number of embedded LUTs, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nlut_model_num_luts(const struct NlutModel *model);

/**
 * Whether the model supports inversion.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
bool nlut_model_is_invertible(const struct NlutModel *model);

/**
 * Extracts embedded LUT `index` on a `res³` lattice.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum NlutStatus nlut_model_reconstruct(const struct NlutModel *model,
                                       size_t index,
                                       size_t res,
                                       struct NlutLut **out);

/**
 * Extracts the LUT selected by `num_weights` blending weights.
 *
 * # Safety
 * `weights` must point to `num_weights` doubles and `out` be writable.
 */
enum NlutStatus nlut_model_blend(const struct NlutModel *model,
                                 const double *weights,
                                 size_t num_weights,
                                 size_t res,
                                 struct NlutLut **out);

/**
 * Extracts the inverse of LUT `index` using `iters` fixed-point iterations.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum NlutStatus nlut_model_invert(const struct NlutModel *model,
                                  size_t index,
                                  size_t res,
                                  size_t iters,
                                  struct NlutLut **out);

/**
 * Runs the network for LUT `index` on `count` packed 8-bit RGB colors.
 *
 * # Safety
 * `rgb_in` and `rgb_out` must each hold `3 * count` bytes; they may alias.
 */
enum NlutStatus nlut_model_apply(const struct NlutModel *model,
                                 size_t index,
                                 const uint8_t *rgb_in,
                                 size_t count,
                                 uint8_t *rgb_out);

/**
 * Parses `.cube` text.
 *
 * # Safety
 * `text` must be NUL-terminated and `out` writable.
 */
enum NlutStatus nlut_lut_parse_cube(const char *text, struct NlutLut **out);

/**
 * Renders a LUT as `.cube` text; release it with [`nlut_string_free`].
 *
 * # Safety
 * `lut` must be a live handle and `out` writable.
 */
enum NlutStatus nlut_lut_write_cube(const struct NlutLut *lut, size_t precision, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used again.
 */
void nlut_string_free(char *s);

/**
 * Lattice points per axis, or 0 for a null handle.
 *
 * # Safety
 * `lut` must be null or a live handle.
 */
size_t nlut_lut_size(const struct NlutLut *lut);

/**
 * Copies the table (red fastest, `3 · size³` doubles) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum NlutStatus nlut_lut_data(const struct NlutLut *lut, double *out, size_t len);

/**
 * Applies a LUT with trilinear interpolation to `count` packed 8-bit colors.
 *
 * # Safety
 * `rgb_in` and `rgb_out` must each hold `3 * count` bytes; they may alias.
 */
enum NlutStatus nlut_lut_apply(const struct NlutLut *lut,
                               const uint8_t *rgb_in,
                               size_t count,
                               uint8_t *rgb_out);

/**
 * Releases a LUT. Null is ignored.
 *
 * # Safety
 * `lut` must come from this library and not be used again.
 */
void nlut_lut_free(struct NlutLut *lut);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLUT_H */

/* C interface to the voiceforge voice-conversion toolkit. */

#ifndef VOICEFORGE_H
#define VOICEFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VfStatus {
  VF_STATUS_OK = 0,
  VF_STATUS_NULL_POINTER = 1,
  VF_STATUS_INVALID_ARGUMENT = 2,
  VF_STATUS_NOT_FOUND = 3,
  VF_STATUS_IO = 4,
  VF_STATUS_UNSUPPORTED_ENCODING = 5,
  VF_STATUS_CORRUPT = 6,
  VF_STATUS_VERSION_MISMATCH = 7,
  VF_STATUS_CHECKSUM_MISMATCH = 8,
  VF_STATUS_DIMENSION_MISMATCH = 9,
  VF_STATUS_ARCHITECTURE_MISMATCH = 10,
  VF_STATUS_SIGNAL_TOO_SHORT = 11,
  VF_STATUS_TRAINING = 12,
  VF_STATUS_BUFFER_TOO_SMALL = 13,
  VF_STATUS_PANIC = 14,
} VfStatus;

typedef struct VfMatrix VfMatrix;

typedef struct VfModel VfModel;

typedef struct VfWaveform VfWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *vf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vf_version(void);

/**
 * Copies `len` samples into a new waveform.
 *
 * # Safety
 * `samples` must point to `len` readable doubles; `out` must be writable.
 */
enum VfStatus vf_waveform_new(const double *samples,
                              size_t len,
                              uint32_t sample_rate,
                              struct VfWaveform **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VfStatus vf_waveform_read(const char *path, struct VfWaveform **out);

/**
 * Writes 16-bit PCM; samples beyond ±1 are saturated.
 *
 * # Safety
 * `w` must be a live handle and `path` a NUL-terminated string.
 */
enum VfStatus vf_waveform_write(const struct VfWaveform *w, const char *path);

/**
 * # Safety
 * `w` must be a live handle or null.
 */
size_t vf_waveform_len(const struct VfWaveform *w);

/**
 * # Safety
 * `w` must be a live handle or null.
 */
uint32_t vf_waveform_sample_rate(const struct VfWaveform *w);

/**
 * Copies all samples into `dst`, which must hold `vf_waveform_len(w)` values.
 *
 * # Safety
 * `w` must be a live handle; `dst` must point to `capacity` writable doubles.
 */
enum VfStatus vf_waveform_copy_samples(const struct VfWaveform *w, double *dst, size_t capacity);

/**
 * # Safety
 * `w` must come from this library and not be freed twice; null is ignored.
 */
void vf_waveform_free(struct VfWaveform *w);

/**
 * Loads a model archive, verifying magic, version and checksum.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VfStatus vf_model_load(const char *path, struct VfModel **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum VfStatus vf_model_save(const struct VfModel *m, const char *path);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t vf_model_input_dim(const struct VfModel *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t vf_model_output_dim(const struct VfModel *m);

/**
 * # Safety
 * `m` must come from this library and not be freed twice; null is ignored.
 */
void vf_model_free(struct VfModel *m);

/**
 * Phoneme posteriors of `w` (frames × classes, rows sum to 1).
 *
 * # Safety
 * `model` and `w` must be live handles; `out` must be writable.
 */
enum VfStatus vf_posteriorgram(const struct VfModel *model,
                               const struct VfWaveform *w,
                               struct VfMatrix **out);

/**
 * Converts `source` with a classifier archive and a conversion archive.
 * The result is at 16 kHz with the source's duration.
 *
 * # Safety
 * All handles must be live; `out` must be writable.
 */
enum VfStatus vf_convert(const struct VfModel *asr,
                         const struct VfModel *vc,
                         const struct VfWaveform *source,
                         struct VfWaveform **out);

/**
 * Vocoder analysis followed by synthesis, at 16 kHz.
 *
 * # Safety
 * `w` must be a live handle; `out` must be writable.
 */
enum VfStatus vf_resynthesize(const struct VfWaveform *w, struct VfWaveform **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VfStatus vf_matrix_load(const char *path, struct VfMatrix **out);

/**
 * # Safety
 * `m` must be a live handle and `path` a NUL-terminated string.
 */
enum VfStatus vf_matrix_save(const struct VfMatrix *m, const char *path);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t vf_matrix_frames(const struct VfMatrix *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t vf_matrix_dims(const struct VfMatrix *m);

/**
 * Row-major data, `frames * dims` doubles, owned by the handle.
 *
 * # Safety
 * `m` must be a live handle or null; the pointer dies with the handle.
 */
const double *vf_matrix_data(const struct VfMatrix *m);

/**
 * # Safety
 * `m` must come from this library and not be freed twice; null is ignored.
 */
void vf_matrix_free(struct VfMatrix *m);

/**
 * Runs the gradient-check suite over `seeds` seeds and stores the largest
 * relative error.
 *
 * # Safety
 * `max_error` must be writable.
 */
enum VfStatus vf_gradcheck(size_t seeds, double *max_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOICEFORGE_H */

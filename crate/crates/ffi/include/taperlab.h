/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef TAPERLAB_H
#define TAPERLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TaperlabStatus {
  TAPERLAB_STATUS_OK = 0,
  /**
   * null pointer, invalid UTF-8 or an output buffer of the wrong size
   */
  TAPERLAB_STATUS_INVALID_ARGUMENT = 1,
  TAPERLAB_STATUS_CONFIG = 2,
  TAPERLAB_STATUS_INPUT = 3,
  TAPERLAB_STATUS_DIVERGED = 4,
  TAPERLAB_STATUS_INTERNAL = 5,
} TaperlabStatus;

/**
 * Taper bank handle.
 */
typedef struct TaperlabBank TaperlabBank;

/**
 * Feature extractor handle.
 */
typedef struct TaperlabExtractor TaperlabExtractor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *taperlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *taperlab_version(void);

/**
 * SWCE bank of `num_tapers` sine tapers of length `frame_length`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TaperlabStatus taperlab_bank_swce(size_t num_tapers,
                                       size_t frame_length,
                                       struct TaperlabBank **out);

/**
 * Single Hamming window as a one-taper bank.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum TaperlabStatus taperlab_bank_hamming(size_t frame_length, struct TaperlabBank **out);

/**
 * Parses a bank from its JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` as for [`taperlab_bank_swce`].
 */
enum TaperlabStatus taperlab_bank_from_json(const char *json, struct TaperlabBank **out);

/**
 * Serializes a bank; release the string with [`taperlab_string_free`].
 *
 * # Safety
 * `bank` must be a live handle and `out` a valid pointer.
 */
enum TaperlabStatus taperlab_bank_to_json(const struct TaperlabBank *bank, char **out);

/**
 * # Safety
 * `s` must come from this library or be NULL.
 */
void taperlab_string_free(char *s);

/**
 * Number of tapers, or 0 for a NULL handle.
 *
 * # Safety
 * `bank` must be a live handle or NULL.
 */
size_t taperlab_bank_num_tapers(const struct TaperlabBank *bank);

/**
 * Taper length, or 0 for a NULL handle.
 *
 * # Safety
 * `bank` must be a live handle or NULL.
 */
size_t taperlab_bank_frame_length(const struct TaperlabBank *bank);

/**
 * Copies the weights into `out`, which must hold exactly `num_tapers` values.
 *
 * # Safety
 * `bank` must be a live handle; `out` must point to `len` writable doubles.
 */
enum TaperlabStatus taperlab_bank_weights(const struct TaperlabBank *bank, double *out, size_t len);

/**
 * Replaces the weights; they must be finite and positive.
 *
 * # Safety
 * `bank` must be a live handle; `weights` must point to `len` doubles.
 */
enum TaperlabStatus taperlab_bank_set_weights(struct TaperlabBank *bank,
                                              const double *weights,
                                              size_t len);

/**
 * # Safety
 * `bank` must come from this library or be NULL; it is invalid afterwards.
 */
void taperlab_bank_free(struct TaperlabBank *bank);

/**
 * Weighted multi-taper power spectrum of one frame into `out`
 * (`n_fft / 2 + 1` values).
 *
 * # Safety
 * `bank` must be a live handle; `frame` must point to `frame_len` doubles and
 * `out` to `out_len` writable doubles.
 */
enum TaperlabStatus taperlab_multitaper_power(const struct TaperlabBank *bank,
                                              const double *frame,
                                              size_t frame_len,
                                              uint32_t sample_rate,
                                              size_t n_fft,
                                              double *out,
                                              size_t out_len);

/**
 * Projects `len` weights onto the floored simplex.
 *
 * # Safety
 * `input` and `out` must each point to `len` doubles; they may alias.
 */
enum TaperlabStatus taperlab_project_weights(const double *input, double *out, size_t len);

/**
 * Feature extractor using `bank`. `config_json` may be NULL for defaults.
 * The bank is copied; the caller keeps ownership of its handle.
 *
 * # Safety
 * `bank` must be a live handle; `config_json` NULL or NUL-terminated; `out` valid.
 */
enum TaperlabStatus taperlab_extractor_new(const struct TaperlabBank *bank,
                                           const char *config_json,
                                           struct TaperlabExtractor **out);

/**
 * # Safety
 * `ex` must come from this library or be NULL; it is invalid afterwards.
 */
void taperlab_extractor_free(struct TaperlabExtractor *ex);

/**
 * Number of coefficients per frame, or 0 for a NULL handle.
 *
 * # Safety
 * `ex` must be a live handle or NULL.
 */
size_t taperlab_extractor_num_ceps(const struct TaperlabExtractor *ex);

/**
 * Frames produced for a signal of `num_samples` samples.
 *
 * # Safety
 * `ex` must be a live handle; `frames` a valid pointer.
 */
enum TaperlabStatus taperlab_extractor_num_frames(const struct TaperlabExtractor *ex,
                                                  size_t num_samples,
                                                  size_t *frames);

/**
 * MFCCs of `signal`, row-major `frames x num_ceps`, into `out`. Size the
 * buffer with [`taperlab_extractor_num_frames`] and
 * [`taperlab_extractor_num_ceps`].
 *
 * # Safety
 * `ex` must be a live handle; `signal` must point to `len` doubles and `out`
 * to `out_len` writable doubles.
 */
enum TaperlabStatus taperlab_extract(const struct TaperlabExtractor *ex,
                                     const double *signal,
                                     size_t len,
                                     double *out,
                                     size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAPERLAB_H */

#ifndef FREREC_H
#define FREREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FrerecStatus {
  FREREC_STATUS_OK = 0,
  FREREC_STATUS_NULL_POINTER = 1,
  FREREC_STATUS_INVALID_ARGUMENT = 2,
  FREREC_STATUS_SHAPE = 3,
  FREREC_STATUS_IO = 4,
  FREREC_STATUS_FORMAT = 5,
  FREREC_STATUS_CONTRACT = 6,
  FREREC_STATUS_NUMERICAL = 7,
  FREREC_STATUS_BUFFER_TOO_SMALL = 8,
  FREREC_STATUS_PANIC = 9,
} FrerecStatus;

/**
 * A real corpus prepared for high-frequency replacement.
 */
typedef struct FrerecCorpus FrerecCorpus;

/**
 * An image with values in `[0, 1]`, `[H,W,C]` row-major.
 */
typedef struct FrerecImage FrerecImage;

/**
 * A trained reconstruction network.
 */
typedef struct FrerecModel FrerecModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *frerec_last_error(void);

/**
 * Static version string.
 */
const char *frerec_version(void);

/**
 * Copies `height*width*channels` values from `data` into a new image.
 *
 * # Safety
 * `data` must point to that many doubles; `out` must be writable.
 */
enum FrerecStatus frerec_image_new(size_t height,
                                   size_t width,
                                   size_t channels,
                                   const double *data,
                                   struct FrerecImage **out);

/**
 * Reads a binary PGM or PPM file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum FrerecStatus frerec_image_load(const char *path, struct FrerecImage **out);

/**
 * Writes a PGM (one channel) or PPM (three channels).
 *
 * # Safety
 * `image` must be a live handle; `path` a nul-terminated string.
 */
enum FrerecStatus frerec_image_save(const struct FrerecImage *image, const char *path);

/**
 * # Safety
 * `image` must be a live handle; the output pointers must be writable.
 */
enum FrerecStatus frerec_image_dims(const struct FrerecImage *image,
                                    size_t *height,
                                    size_t *width,
                                    size_t *channels);

/**
 * Copies the pixels into `buffer`, which holds `len` doubles.
 *
 * # Safety
 * `image` must be a live handle; `buffer` must hold `len` doubles.
 */
enum FrerecStatus frerec_image_pixels(const struct FrerecImage *image, double *buffer, size_t len);

/**
 * # Safety
 * `image` must be null or a handle not yet freed.
 */
void frerec_image_free(struct FrerecImage *image);

/**
 * Builds a real corpus from `count` images with mask ratio `ratio`,
 * `k` retrieved neighbors and draw seed `seed`.
 *
 * # Safety
 * `images` must point to `count` live handles; `out` must be writable.
 */
enum FrerecStatus frerec_corpus_new(const struct FrerecImage *const *images,
                                    size_t count,
                                    double ratio,
                                    size_t k,
                                    uint64_t seed,
                                    struct FrerecCorpus **out);

/**
 * High-frequency replacement of `image` with draw stream `draw`.
 *
 * # Safety
 * `corpus` and `image` must be live handles; `out` must be writable.
 */
enum FrerecStatus frerec_corpus_calibrate(const struct FrerecCorpus *corpus,
                                          const struct FrerecImage *image,
                                          uint64_t draw,
                                          struct FrerecImage **out);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void frerec_corpus_free(struct FrerecCorpus *corpus);

/**
 * Loads a FREC model container.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum FrerecStatus frerec_model_load(const char *path, struct FrerecModel **out);

/**
 * Runs the network on `image`, clamping the result to `[0, 1]`.
 *
 * # Safety
 * `model` and `image` must be live handles; `out` must be writable.
 */
enum FrerecStatus frerec_model_reconstruct(const struct FrerecModel *model,
                                           const struct FrerecImage *image,
                                           struct FrerecImage **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void frerec_model_free(struct FrerecModel *model);

/**
 * Writes the radial profile (`side/2` bands) into `buffer` and its length
 * into `written`.
 *
 * # Safety
 * `image` must be a live handle; `buffer` must hold `len` doubles.
 */
enum FrerecStatus frerec_radial_profile(const struct FrerecImage *image,
                                        double *buffer,
                                        size_t len,
                                        size_t *written);

/**
 * Mean absolute difference of two profiles over bands `k >= k_min`.
 *
 * # Safety
 * `a` and `b` must each hold `len` doubles; `out` must be writable.
 */
enum FrerecStatus frerec_profile_distance(const double *a,
                                          const double *b,
                                          size_t len,
                                          size_t k_min,
                                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FREREC_H */

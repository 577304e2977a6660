#ifndef GLYPHFUSE_H
#define GLYPHFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GF_CANVAS_HEIGHT 30

#define GF_CANVAS_WIDTH 60

#define GF_N_CLASSES 3

typedef enum GfGranularity {
  GF_GRANULARITY_WORD = 0,
  GF_GRANULARITY_CHAR = 1,
} GfGranularity;

typedef enum GfStatus {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_ARGUMENT = 1,
  GF_STATUS_INVALID_UTF8 = 2,
  GF_STATUS_IO = 3,
  GF_STATUS_FORMAT = 4,
  GF_STATUS_DIMENSION = 5,
  GF_STATUS_CONFIG = 6,
  GF_STATUS_NUMERICAL = 7,
  GF_STATUS_BUFFER_TOO_SMALL = 8,
  GF_STATUS_NOT_FOUND = 9,
  GF_STATUS_PANIC = 10,
  GF_STATUS_OTHER = 11,
} GfStatus;

/**
 * Contextual embedding table.
 */
typedef struct GfEmbeddings GfEmbeddings;

/**
 * Bitmap font.
 */
typedef struct GfFont GfFont;

/**
 * Trained NLI model with its geometry.
 */
typedef struct GfModel GfModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *gf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gf_version(void);

/**
 * Loads a BDF font.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GfStatus gf_font_load(const char *path, struct GfFont **out);

/**
 * # Safety
 * `font` must come from [`gf_font_load`] and not be freed twice. Null is ignored.
 */
void gf_font_free(struct GfFont *font);

/**
 * Renders one segment onto the default 30x60 canvas, row-major, values in [0,1].
 *
 * # Safety
 * `pixels` must point to at least `len` floats.
 */
enum GfStatus gf_render(const struct GfFont *font, const char *segment, float *pixels, size_t len);

/**
 * Reads a GEMB embedding table.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GfStatus gf_embeddings_load(const char *path, struct GfEmbeddings **out);

/**
 * Vector width, or 0 for a null handle.
 *
 * # Safety
 * `emb` must be null or a live handle.
 */
size_t gf_embeddings_dim(const struct GfEmbeddings *emb);

/**
 * Number of vectors, or 0 for a null handle.
 *
 * # Safety
 * `emb` must be null or a live handle.
 */
size_t gf_embeddings_count(const struct GfEmbeddings *emb);

/**
 * Copies the vector for `id` into `out`.
 *
 * # Safety
 * `out` must point to at least `len` floats.
 */
enum GfStatus gf_embeddings_get(const struct GfEmbeddings *emb,
                                uint64_t id,
                                float *out,
                                size_t len);

/**
 * # Safety
 * `emb` must come from [`gf_embeddings_load`] and not be freed twice. Null is ignored.
 */
void gf_embeddings_free(struct GfEmbeddings *emb);

/**
 * Loads a GFCK checkpoint. `preset` is null, `"default"` or `"paper-800"`;
 * `context_dim` is the width of the embeddings the model was trained on.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `preset` null or NUL-terminated,
 * and `out` writable.
 */
enum GfStatus gf_model_load(const char *path,
                            size_t context_dim,
                            const char *preset,
                            struct GfModel **out);

/**
 * Classifies one premise/hypothesis pair. Writes 3 logits (entailment,
 * neutral, contradiction) to `logits` and their argmax to `label`; either
 * may be null.
 *
 * # Safety
 * Handles must be live, strings NUL-terminated, `context` must point to
 * `context_len` floats and `logits` (if non-null) to `logits_len` floats.
 */
enum GfStatus gf_model_predict(const struct GfModel *model,
                               const struct GfFont *font,
                               const char *premise,
                               const char *hypothesis,
                               enum GfGranularity granularity,
                               const float *context,
                               size_t context_len,
                               float *logits,
                               size_t logits_len,
                               uint32_t *label);

/**
 * # Safety
 * `model` must come from [`gf_model_load`] and not be freed twice. Null is ignored.
 */
void gf_model_free(struct GfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLYPHFUSE_H */

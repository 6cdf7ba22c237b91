#ifndef MASKFUSE_H
#define MASKFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  MF_STATUS_DIMENSION_MISMATCH = 3,
  MF_STATUS_PARSE = 4,
  MF_STATUS_BUFFER_TOO_SMALL = 5,
  MF_STATUS_INTERNAL = 6,
} MfStatus;

// Click text dialect accepted by [`mf_clicks_parse`].
typedef enum MfClickFormat {
  MF_CLICK_FORMAT_TEXT = 0,
  MF_CLICK_FORMAT_JSON = 1,
  MF_CLICK_FORMAT_AUTO = 2,
} MfClickFormat;

// Ordered positive and negative clicks.
typedef struct MfClickSet MfClickSet;

// Binary raster mask.
typedef struct MfMask MfMask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *mf_last_error(void);

// Library version as a static NUL-terminated string.
const char *mf_version(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void mf_string_free(char *s);

// Creates an empty `width` x `height` mask.
//
// # Safety
// `out` must be valid for a pointer write.
enum MfStatus mf_mask_new(uint32_t width, uint32_t height, struct MfMask **out);

// Creates a mask from `width * height` row-major bytes; non-zero is set.
//
// # Safety
// `data` must be readable for `len` bytes and `out` valid for a write.
enum MfStatus mf_mask_from_bytes(uint32_t width,
                                 uint32_t height,
                                 const uint8_t *data,
                                 size_t len,
                                 struct MfMask **out);

// # Safety
// `mask` must come from this library and not have been freed, or be null.
void mf_mask_free(struct MfMask *mask);

// Width in pixels; 0 for null.
//
// # Safety
// `mask` must be a live handle or null.
uint32_t mf_mask_width(const struct MfMask *mask);

// Height in pixels; 0 for null.
//
// # Safety
// `mask` must be a live handle or null.
uint32_t mf_mask_height(const struct MfMask *mask);

// Number of set pixels; 0 for null.
//
// # Safety
// `mask` must be a live handle or null.
uint64_t mf_mask_count(const struct MfMask *mask);

// # Safety
// `mask` must be a live handle and `out` valid for a write.
enum MfStatus mf_mask_get(const struct MfMask *mask, uint32_t x, uint32_t y, bool *out);

// # Safety
// `mask` must be a live handle.
enum MfStatus mf_mask_set(struct MfMask *mask, uint32_t x, uint32_t y, bool value);

// Copies the mask into `out` as row-major 0/1 bytes; `len` must be at least
// `width * height`.
//
// # Safety
// `mask` must be a live handle and `out` writable for `len` bytes.
enum MfStatus mf_mask_to_bytes(const struct MfMask *mask, uint8_t *out, size_t len);

// New mask `a | b`.
//
// # Safety
// `a`, `b` must be live handles and `out` valid for a write.
enum MfStatus mf_mask_union(const struct MfMask *a, const struct MfMask *b, struct MfMask **out);

// New mask `a & !b`.
//
// # Safety
// `a`, `b` must be live handles and `out` valid for a write.
enum MfStatus mf_mask_difference(const struct MfMask *a,
                                 const struct MfMask *b,
                                 struct MfMask **out);

// Intersection over union; two empty masks give 1.
//
// # Safety
// `a`, `b` must be live handles and `out` valid for a write.
enum MfStatus mf_mask_iou(const struct MfMask *a, const struct MfMask *b, double *out);

// Squared Euclidean distance from each pixel to the nearest pixel outside
// the mask (beyond the frame counts as outside), row-major into `out`.
//
// # Safety
// `mask` must be a live handle and `out` writable for `len` values.
enum MfStatus mf_distance_transform(const struct MfMask *mask, uint32_t *out, size_t len);

// Union of the proposals whose pixels mostly have probability above 0.5.
// `prob` holds `width * height` row-major values in [0, 1].
//
// # Safety
// `prob` must be readable for `width * height` floats, `proposals` for
// `count` live handles (may be null when `count` is 0), `out` writable.
enum MfStatus mf_select_masks(const float *prob,
                              uint32_t width,
                              uint32_t height,
                              const struct MfMask *const *proposals,
                              size_t count,
                              struct MfMask **out);

// Empty click set.
struct MfClickSet *mf_clickset_new(void);

// # Safety
// `clicks` must come from this library and not have been freed, or be null.
void mf_clickset_free(struct MfClickSet *clicks);

// Appends a click.
//
// # Safety
// `clicks` must be a live handle.
enum MfStatus mf_clickset_push(struct MfClickSet *clicks, uint32_t x, uint32_t y, bool positive);

// Total clicks; 0 for null.
//
// # Safety
// `clicks` must be a live handle or null.
size_t mf_clickset_len(const struct MfClickSet *clicks);

// Click `index`, counting positives first and then negatives.
//
// # Safety
// `clicks` must be a live handle; `x`, `y`, `positive` valid for writes.
enum MfStatus mf_clickset_get(const struct MfClickSet *clicks,
                              size_t index,
                              uint32_t *x,
                              uint32_t *y,
                              bool *positive);

// Uniform `n` x `n` grid of positive clicks over a `width` x `height` image.
//
// # Safety
// `out` must be valid for a pointer write.
enum MfStatus mf_grid_clicks(uint32_t width, uint32_t height, uint32_t n, struct MfClickSet **out);

// Parses model output into clicks.
//
// # Safety
// `text` must be a NUL-terminated UTF-8 string and `out` valid for a write.
enum MfStatus mf_clicks_parse(const char *text, enum MfClickFormat format, struct MfClickSet **out);

// Canonical text form, e.g. `Positive: [(1, 2)], Negative: []`. Release the
// result with [`mf_string_free`].
//
// # Safety
// `clicks` must be a live handle and `out` valid for a write.
enum MfStatus mf_clicks_serialize(const struct MfClickSet *clicks, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MASKFUSE_H */

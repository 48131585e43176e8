#ifndef STREAMCODE_H
#define STREAMCODE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StreamcodeStatus {
  STREAMCODE_STATUS_OK = 0,
  STREAMCODE_STATUS_NULL_POINTER = 1,
  STREAMCODE_STATUS_INVALID_ARGUMENT = 2,
  STREAMCODE_STATUS_IO = 3,
  STREAMCODE_STATUS_FORMAT = 4,
  STREAMCODE_STATUS_CORRUPT = 5,
  STREAMCODE_STATUS_RUNTIME = 6,
  STREAMCODE_STATUS_PANIC = 7,
} StreamcodeStatus;

/**
 * The output of one coder over one source.
 */
typedef struct StreamcodeCoded StreamcodeCoded;

/**
 * A token stream with the predictor that scores it.
 */
typedef struct StreamcodeSource StreamcodeSource;

typedef struct StreamcodeTextOptions {
  /**
   * `"char"` or `"word"`; NULL selects `"char"`.
   */
  const char *tokenizer;
  /**
   * Source rate in characters per second.
   */
  uint64_t cps;
  /**
   * `"uniform"`, `"unigram"` or `"ngram"`; NULL selects `"ngram"`.
   */
  const char *predictor;
  uint32_t order;
  double delta;
  /**
   * PMF quantization precision F.
   */
  uint32_t freq_bits;
  /**
   * Keep at most this many tokens; 0 keeps all.
   */
  size_t max_tokens;
} StreamcodeTextOptions;

typedef struct StreamcodeCodedStats {
  size_t tokens;
  size_t units;
  double total_bits;
  double bits_per_token;
} StreamcodeCodedStats;

typedef struct StreamcodeDelaySummary {
  double rate_bps;
  double mean_delay_s;
  double p95_delay_s;
  double max_delay_s;
  /**
   * 1 when the coder's bit rate is below the channel rate.
   */
  int32_t stable;
} StreamcodeDelaySummary;

/**
 * Bytes owned by the library; release with [`streamcode_buffer_free`].
 */
typedef struct StreamcodeBuffer {
  uint8_t *data;
  size_t len;
} StreamcodeBuffer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static, NUL-terminated version string.
 */
const char *streamcode_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failure on the same thread.
 */
const char *streamcode_last_error(void);

/**
 * Defaults: char tokenizer, 20 chars/s, order-3 n-gram with delta 0.1,
 * F = 14, every token.
 */
struct StreamcodeTextOptions streamcode_text_options_default(void);

/**
 * Tokenizes `len` bytes of `text` and attaches a predictor.
 *
 * # Safety
 * `text` must point to `len` readable bytes. `options` may be NULL or must
 * point to a valid options struct whose strings are NUL-terminated.
 * `out` must be writable.
 */
enum StreamcodeStatus streamcode_source_from_text(const uint8_t *text,
                                                  size_t len,
                                                  const struct StreamcodeTextOptions *options,
                                                  struct StreamcodeSource **out);

/**
 * Loads a probability trace and replays it as the predictor.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum StreamcodeStatus streamcode_source_from_trace(const char *path,
                                                   uint64_t cps,
                                                   uint32_t freq_bits,
                                                   size_t max_tokens,
                                                   struct StreamcodeSource **out);

/**
 * # Safety
 * `source` must be NULL or a handle from a `streamcode_source_from_*` call
 * that has not been freed.
 */
void streamcode_source_free(struct StreamcodeSource *source);

/**
 * # Safety
 * `source` must be a live source handle; `tokens` and `chars` must be
 * writable.
 */
enum StreamcodeStatus streamcode_source_counts(const struct StreamcodeSource *source,
                                               size_t *tokens,
                                               uint64_t *chars);

/**
 * Shannon bits per character of the source under its predictor.
 *
 * # Safety
 * `source` must be a live source handle and `out` writable.
 */
enum StreamcodeStatus streamcode_shannon_bpc(const struct StreamcodeSource *source, double *out);

/**
 * Runs one coder (`"ac"`, `"rans-k16"`, `"huffman-exact"`, ...) over the
 * source.
 *
 * # Safety
 * `source` must be a live source handle, `coder` a NUL-terminated string
 * and `out` writable.
 */
enum StreamcodeStatus streamcode_encode(const struct StreamcodeSource *source,
                                        const char *coder,
                                        struct StreamcodeCoded **out);

/**
 * # Safety
 * `coded` must be NULL or a live handle from [`streamcode_encode`].
 */
void streamcode_coded_free(struct StreamcodeCoded *coded);

/**
 * # Safety
 * `coded` must be a live coded handle and `out` writable.
 */
enum StreamcodeStatus streamcode_coded_stats(const struct StreamcodeCoded *coded,
                                             struct StreamcodeCodedStats *out);

/**
 * Serves `coded` over a channel of `rate_bps` bits per second.
 *
 * When `delays` is non-NULL it receives one delay in seconds per token and
 * must hold at least `delays_len` doubles, with `delays_len` no smaller than
 * the token count.
 *
 * # Safety
 * `source` and `coded` must be live handles, `coded` produced from
 * `source`. `delays` must be NULL or valid for `delays_len` writes and
 * `summary` must be writable.
 */
enum StreamcodeStatus streamcode_simulate(const struct StreamcodeSource *source,
                                          const struct StreamcodeCoded *coded,
                                          double rate_bps,
                                          double *delays,
                                          size_t delays_len,
                                          struct StreamcodeDelaySummary *summary);

/**
 * Encodes the source into a self-describing container.
 *
 * # Safety
 * `source` must be a live source handle, `coder` a NUL-terminated string
 * and `out` writable. Free the result with [`streamcode_buffer_free`].
 */
enum StreamcodeStatus streamcode_container_encode(const struct StreamcodeSource *source,
                                                  const char *coder,
                                                  struct StreamcodeBuffer *out);

/**
 * Decodes a container back to the original text bytes. Containers built
 * from a trace need `trace_path`; otherwise pass NULL.
 *
 * # Safety
 * `data` must point to `len` readable bytes, `trace_path` must be NULL or a
 * NUL-terminated string and `out` writable.
 */
enum StreamcodeStatus streamcode_container_decode(const uint8_t *data,
                                                  size_t len,
                                                  const char *trace_path,
                                                  struct StreamcodeBuffer *out);

/**
 * Runs a rate sweep and returns `bits.csv` and `delays.csv` contents.
 *
 * `coders` is a comma-separated id list or NULL for the default set;
 * `alphas` may be NULL with `n_alphas == 0` for the default grid; `jobs == 0`
 * uses every core. Each source contributes all of its tokens.
 *
 * # Safety
 * `sources` must point to `n_sources` live source handles, `alphas` to
 * `n_alphas` doubles (or be NULL when `n_alphas` is 0), `coders` must be
 * NULL or NUL-terminated, and both output buffers must be writable.
 */
enum StreamcodeStatus streamcode_sweep(const struct StreamcodeSource *const *sources,
                                       size_t n_sources,
                                       const char *coders,
                                       const double *alphas,
                                       size_t n_alphas,
                                       uint32_t jobs,
                                       struct StreamcodeBuffer *bits_csv,
                                       struct StreamcodeBuffer *delays_csv);

/**
 * Releases a buffer's bytes and resets it to empty. Safe on an empty
 * buffer.
 *
 * # Safety
 * `buffer` must be NULL or point to a buffer filled by this library and not
 * yet freed.
 */
void streamcode_buffer_free(struct StreamcodeBuffer *buffer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STREAMCODE_H */

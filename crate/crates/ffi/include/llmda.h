/* Generated by cbindgen. Do not edit. */

#ifndef LLMDA_H
#define LLMDA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LlmdaStatus {
  LLMDA_STATUS_OK = 0,
  LLMDA_STATUS_NULL_POINTER = 1,
  LLMDA_STATUS_INVALID_UTF8 = 2,
  LLMDA_STATUS_INVALID_ARGUMENT = 3,
  LLMDA_STATUS_MATH = 4,
  LLMDA_STATUS_CORPUS = 5,
  /**
   * The completion was rejected by the sanitizer.
   */
  LLMDA_STATUS_REJECTED = 6,
  LLMDA_STATUS_BUFFER_TOO_SMALL = 7,
  LLMDA_STATUS_PANIC = 8,
} LlmdaStatus;

typedef enum LlmdaCorpusFormat {
  LLMDA_CORPUS_FORMAT_CUHK_PEDES_JSON = 0,
  LLMDA_CORPUS_FORMAT_CANONICAL_JSONL = 1,
} LlmdaCorpusFormat;

/**
 * Parsed caption records.
 */
typedef struct LlmdaCorpus LlmdaCorpus;

/**
 * Row-major `n x n` similarity matrix; row = text, column = image.
 */
typedef struct LlmdaSimilarityMatrix LlmdaSimilarityMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *llmda_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *llmda_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void llmda_string_free(char *s);

/**
 * Cosine similarity of two `dim`-length vectors.
 *
 * # Safety
 * `a` and `b` must point to `dim` doubles; `out` must be writable.
 */
enum LlmdaStatus llmda_cosine_similarity(const double *a, const double *b, size_t dim, double *out);

/**
 * Wraps `n * n` row-major values (row = text, column = image).
 *
 * # Safety
 * `values` must point to `n * n` doubles; `out` must be writable.
 */
enum LlmdaStatus llmda_similarity_matrix_new(const double *values,
                                             size_t n,
                                             struct LlmdaSimilarityMatrix **out);

/**
 * Cosine matrix of `n` image and `n` text features, each `dim` long and
 * stored row-major.
 *
 * # Safety
 * `images` and `texts` must point to `n * dim` doubles; `out` must be writable.
 */
enum LlmdaStatus llmda_similarity_matrix_from_features(const double *images,
                                                       const double *texts,
                                                       size_t n,
                                                       size_t dim,
                                                       struct LlmdaSimilarityMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library, not yet freed.
 */
void llmda_similarity_matrix_free(struct LlmdaSimilarityMatrix *m);

/**
 * Side length of the matrix, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t llmda_similarity_matrix_n(const struct LlmdaSimilarityMatrix *m);

/**
 * Image-to-text contrastive loss.
 *
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum LlmdaStatus llmda_loss_v2t(const struct LlmdaSimilarityMatrix *m, double tau, double *out);

/**
 * Text-to-image contrastive loss.
 *
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
enum LlmdaStatus llmda_loss_t2v(const struct LlmdaSimilarityMatrix *m, double tau, double *out);

/**
 * Writes the row-major gradient of the summed loss into `out`, which must
 * hold at least `n * n` doubles.
 *
 * # Safety
 * `m` must be a live handle; `out` must point to `out_len` writable doubles.
 */
enum LlmdaStatus llmda_loss_gradient(const struct LlmdaSimilarityMatrix *m,
                                     double tau,
                                     double *out,
                                     size_t out_len);

/**
 * Text-to-image Rank-K in percent. Gallery item `j` is relevant to query
 * `i` when `gallery_ids[j] == query_ids[i]`.
 *
 * # Safety
 * `m` must be a live handle; the id arrays must hold `n` entries each.
 */
enum LlmdaStatus llmda_rank_k(const struct LlmdaSimilarityMatrix *m,
                              const uint64_t *query_ids,
                              const uint64_t *gallery_ids,
                              size_t k,
                              double *out);

/**
 * Text-to-image mean average precision in percent.
 *
 * # Safety
 * As for [`llmda_rank_k`].
 */
enum LlmdaStatus llmda_mean_average_precision(const struct LlmdaSimilarityMatrix *m,
                                              const uint64_t *query_ids,
                                              const uint64_t *gallery_ids,
                                              double *out);

/**
 * Balanced sampling choice for one caption. `out_augmented` receives 1 when
 * the augmented text is selected; `out_r` (optional) receives the draw.
 *
 * # Safety
 * `text_id` must be a NUL-terminated string; `out_augmented` must be writable.
 */
enum LlmdaStatus llmda_bss_select(const char *text_id,
                                  uint32_t epoch,
                                  double beta,
                                  uint64_t seed,
                                  bool has_augmentation,
                                  bool *out_augmented,
                                  double *out_r);

/**
 * Cleans a raw completion. On success `*out` is a new string; on
 * rejection the status is `Rejected` and `*out` is null.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out` must be writable.
 */
enum LlmdaStatus llmda_sanitize_response(const char *raw, char **out);

/**
 * Parses annotation bytes.
 *
 * # Safety
 * `data` must point to `len` bytes; `out` must be writable.
 */
enum LlmdaStatus llmda_corpus_parse(const uint8_t *data,
                                    size_t len,
                                    enum LlmdaCorpusFormat format,
                                    struct LlmdaCorpus **out);

/**
 * # Safety
 * `c` must be null or a live corpus handle.
 */
void llmda_corpus_free(struct LlmdaCorpus *c);

/**
 * Number of caption records, or 0 for a null handle.
 *
 * # Safety
 * `c` must be null or a live corpus handle.
 */
size_t llmda_corpus_len(const struct LlmdaCorpus *c);

/**
 * Serializes the corpus as canonical JSONL into a new string.
 *
 * # Safety
 * `c` must be a live corpus handle; `out` must be writable.
 */
enum LlmdaStatus llmda_corpus_write_manifest(const struct LlmdaCorpus *c, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLMDA_H */

#ifndef CCD_H
#define CCD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CCD_SPLIT_TRAIN 0

#define CCD_SPLIT_VAL 1

#define CCD_SPLIT_TEST 2

/**
 * Result code of every call.
 */
typedef enum CcdStatus {
  CCD_OK = 0,
  CCD_ERR_NULL = 1,
  CCD_ERR_CONFIG = 2,
  CCD_ERR_DATA = 3,
  CCD_ERR_INPUT = 4,
  CCD_ERR_VERSION = 5,
  CCD_ERR_NUMERIC = 6,
  CCD_ERR_IO = 7,
  CCD_ERR_INTERNAL = 8,
  CCD_ERR_PANIC = 9,
} CcdStatus;

/**
 * A loaded or generated corpus.
 */
typedef struct CcdCorpus CcdCorpus;

/**
 * A model restored from a checkpoint.
 */
typedef struct CcdModel CcdModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ccd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ccd_version(void);

/**
 * Generates a synthetic paired corpus with the default grammar.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CcdStatus ccd_corpus_generate(uint64_t seed, size_t n_samples, struct CcdCorpus **out_corpus);

/**
 * Loads a corpus file written by `ccd gen-data`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_corpus` must be writable.
 */
enum CcdStatus ccd_corpus_load(const char *path, struct CcdCorpus **out_corpus);

/**
 * Number of samples in one split.
 *
 * # Safety
 * `corpus` must come from this library; `out_n` must be writable.
 */
enum CcdStatus ccd_corpus_num_samples(const struct CcdCorpus *corpus,
                                      uint32_t split,
                                      size_t *out_n);

/**
 * Releases a corpus. Null is ignored.
 *
 * # Safety
 * `corpus` must come from this library and not be used afterwards.
 */
void ccd_corpus_free(struct CcdCorpus *corpus);

/**
 * Restores a model checkpoint. When `corpus` is not null its vocabulary
 * must match the checkpoint's.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `corpus` null or a live handle,
 * `out_model` writable.
 */
enum CcdStatus ccd_model_load(const char *path,
                              const struct CcdCorpus *corpus,
                              struct CcdModel **out_model);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ccd_model_free(struct CcdModel *model);

/**
 * Next-step BLEU1 and BLEU4 of a model on one split.
 *
 * # Safety
 * Handles must be live; output pointers writable.
 */
enum CcdStatus ccd_model_evaluate(const struct CcdModel *model,
                                  const struct CcdCorpus *corpus,
                                  uint32_t split,
                                  double *out_bleu1,
                                  double *out_bleu4);

/**
 * Corpus BLEU-`max_n` of `n` candidate/reference pairs. Sequences are
 * concatenated in `*_tokens` with their lengths in `*_lens`.
 *
 * # Safety
 * Arrays must hold the stated number of elements.
 */
enum CcdStatus ccd_bleu(const uint32_t *cand_tokens,
                        const size_t *cand_lens,
                        const uint32_t *ref_tokens,
                        const size_t *ref_lens,
                        size_t n,
                        size_t max_n,
                        double *out_score);

/**
 * Contrastive distillation loss of `k` paired rows of width `d` (row-major),
 * with in-batch hard negatives and margin `margin`.
 *
 * # Safety
 * `student` and `teacher` must each hold `k * d` doubles.
 */
enum CcdStatus ccd_ccd_loss(const double *student,
                            const double *teacher,
                            size_t k,
                            size_t d,
                            double margin,
                            double *out_loss);

/**
 * Mean squared difference of `k` paired rows of width `d`.
 *
 * # Safety
 * `student` and `teacher` must each hold `k * d` doubles.
 */
enum CcdStatus ccd_feature_l2(const double *student,
                              const double *teacher,
                              size_t k,
                              size_t d,
                              double *out_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CCD_H */

#ifndef DDI_H
#define DDI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum DdiStatus {
  DDI_STATUS_OK = 0,
  DDI_STATUS_NULL_POINTER = 1,
  DDI_STATUS_PARSE = 2,
  DDI_STATUS_VALIDATION = 3,
  DDI_STATUS_SKELETON = 4,
  DDI_STATUS_INVALID_ARGUMENT = 5,
  DDI_STATUS_VERSION = 6,
  DDI_STATUS_INTERNAL = 7,
  DDI_STATUS_PANIC = 8,
} DdiStatus;

// A corpus document.
typedef struct DdiCorpus DdiCorpus;

// A trained model loaded from a checkpoint.
typedef struct DdiModel DdiModel;

// Primary-mode F1 of one comparison, in [0, 1].
typedef struct DdiPrimaryF1 {
  double entity;
  double relation;
} DdiPrimaryF1;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the calling thread's last failed call, or "" after a
// success. Valid until the next call on the same thread.
const char *ddi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ddi_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void ddi_string_free(char *s);

// Parses a corpus document against the built-in code vocabulary.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum DdiStatus ddi_corpus_parse(const uint8_t *data, size_t len, struct DdiCorpus **out);

// Generates a synthetic annotated corpus with default mixture settings.
//
// # Safety
// `out` must be writable.
enum DdiStatus ddi_corpus_generate(uint64_t seed,
                                   size_t labels,
                                   size_t sentences_per_label,
                                   struct DdiCorpus **out);

// Releases a corpus. Null is ignored.
//
// # Safety
// `c` must come from this library and not have been freed.
void ddi_corpus_free(struct DdiCorpus *c);

// Number of sentences, or 0 for a null handle.
//
// # Safety
// `c` must be null or a live handle.
size_t ddi_corpus_sentence_count(const struct DdiCorpus *c);

// Canonical serialization of a corpus, NUL-terminated.
//
// # Safety
// `c` must be a live handle; `out` must be writable.
enum DdiStatus ddi_corpus_serialize(const struct DdiCorpus *c, char **out);

// Full four-criterion score report as JSON.
//
// # Safety
// `gold` and `pred` must be live handles; `out` must be writable.
enum DdiStatus ddi_score_json(const struct DdiCorpus *gold,
                              const struct DdiCorpus *pred,
                              char **out);

// Primary entity and relation F1 of `pred` against `gold`.
//
// # Safety
// `gold` and `pred` must be live handles; `out` must be writable.
enum DdiStatus ddi_score_primary(const struct DdiCorpus *gold,
                                 const struct DdiCorpus *pred,
                                 struct DdiPrimaryF1 *out);

// Primary F1 of the encode-then-decode reconstruction of `gold`.
//
// # Safety
// `gold` must be a live handle; `out` must be writable.
enum DdiStatus ddi_roundtrip(const struct DdiCorpus *gold, struct DdiPrimaryF1 *out);

// Vote-merges `n` prediction sets over one skeleton.
//
// # Safety
// `sets` must point to `n` live handles; `out` must be writable.
enum DdiStatus ddi_ensemble_merge(const struct DdiCorpus *const *sets,
                                  size_t n,
                                  size_t min_votes,
                                  struct DdiCorpus **out);

// Loads a model checkpoint.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum DdiStatus ddi_model_load(const uint8_t *data, size_t len, struct DdiModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `m` must come from this library and not have been freed.
void ddi_model_free(struct DdiModel *m);

// Annotates every sentence of `corpus` with default inference settings.
//
// # Safety
// `model` and `corpus` must be live handles; `out` must be writable.
enum DdiStatus ddi_predict(const struct DdiModel *model,
                           const struct DdiCorpus *corpus,
                           struct DdiCorpus **out);

// Minibatch size for an objective with `n` examples.
size_t ddi_minibatch_size(size_t n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDI_H */

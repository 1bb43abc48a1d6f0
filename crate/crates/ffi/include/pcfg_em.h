#ifndef PCFG_EM_H
#define PCFG_EM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PcfgStatus {
  PCFG_STATUS_OK = 0,
  PCFG_STATUS_NULL_POINTER = 1,
  PCFG_STATUS_INVALID_UTF8 = 2,
  PCFG_STATUS_GRAMMAR_ERROR = 3,
  PCFG_STATUS_CORPUS_ERROR = 4,
  PCFG_STATUS_ESTIMATION_ERROR = 5,
  PCFG_STATUS_ORACLE_ERROR = 6,
  PCFG_STATUS_INDEX_OUT_OF_RANGE = 7,
  PCFG_STATUS_PANIC = 8,
} PcfgStatus;

/**
 * Opaque corpus handle.
 */
typedef struct PcfgCorpus PcfgCorpus;

/**
 * Opaque grammar handle.
 */
typedef struct PcfgGrammar PcfgGrammar;

/**
 * Training parameters; obtain defaults from `pcfg_train_options_default`.
 */
typedef struct PcfgTrainOptions {
  size_t max_iters;
  double epsilon;
  bool strict;
  size_t jobs;
} PcfgTrainOptions;

/**
 * Summary of a training run.
 */
typedef struct PcfgTrainSummary {
  size_t iterations;
  double initial_log_likelihood;
  double final_log_likelihood;
  bool converged;
  size_t zero_rules;
} PcfgTrainSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or NULL. The
 * pointer stays valid until the next `pcfg_*` call on the same thread.
 */
const char *pcfg_last_error(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void pcfg_string_free(char *s);

/**
 * Parses grammar file text. Unnormalized distributions are rejected unless
 * `renormalize` is set.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_parse(const char *text, bool renormalize, struct PcfgGrammar **out);

/**
 * # Safety
 * `grammar` must be NULL or a handle from this library, not yet freed.
 */
void pcfg_grammar_free(struct PcfgGrammar *grammar);

/**
 * Grammar file text; free with `pcfg_string_free`.
 *
 * # Safety
 * `grammar` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_to_text(const struct PcfgGrammar *grammar, char **out);

/**
 * # Safety
 * `grammar` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_rule_count(const struct PcfgGrammar *grammar, size_t *out);

/**
 * Probability of the rule at position `index` in file order.
 *
 * # Safety
 * `grammar` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_rule_prob(const struct PcfgGrammar *grammar,
                                       size_t index,
                                       double *out);

/**
 * Rule at position `index` rendered as `A -> B C` or `A -> "a"`; free with
 * `pcfg_string_free`.
 *
 * # Safety
 * `grammar` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_rule_text(const struct PcfgGrammar *grammar, size_t index, char **out);

/**
 * Sets `*out` to whether every LHS distribution sums to 1 within 1e-9.
 *
 * # Safety
 * `grammar` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_grammar_is_valid(const struct PcfgGrammar *grammar, bool *out);

/**
 * Parses corpus text: one sentence per line, whitespace-separated tokens.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum PcfgStatus pcfg_corpus_load(const char *text, struct PcfgCorpus **out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from this library, not yet freed.
 */
void pcfg_corpus_free(struct PcfgCorpus *corpus);

/**
 * Number of distinct sentences in the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum PcfgStatus pcfg_corpus_type_count(const struct PcfgCorpus *corpus, size_t *out);

/**
 * Inside probability of a whitespace-tokenized sentence; 0 if it has no
 * parse.
 *
 * # Safety
 * `grammar` must be a live handle, `sentence` a NUL-terminated string and
 * `out` writable.
 */
enum PcfgStatus pcfg_sentence_prob(const struct PcfgGrammar *grammar,
                                   const char *sentence,
                                   double *out);

/**
 * Frequency-weighted mean natural-log sentence probability. Sentences
 * with probability 0 are excluded and counted in `*out_skipped`; with
 * `strict` any such sentence yields `-inf`.
 *
 * # Safety
 * Handles must be live; `out_value` and `out_skipped` writable.
 */
enum PcfgStatus pcfg_log_likelihood(const struct PcfgGrammar *grammar,
                                    const struct PcfgCorpus *corpus,
                                    bool strict,
                                    double *out_value,
                                    size_t *out_skipped);

/**
 * One inside-outside re-estimation step; `*out` receives a new handle.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum PcfgStatus pcfg_reestimate(const struct PcfgGrammar *grammar,
                                const struct PcfgCorpus *corpus,
                                bool strict,
                                size_t jobs,
                                struct PcfgGrammar **out);

/**
 * One EM step computed by explicit parse-tree enumeration (at most `cap`
 * trees per sentence); `*out` receives a new handle.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum PcfgStatus pcfg_em_step_enumerated(const struct PcfgGrammar *grammar,
                                        const struct PcfgCorpus *corpus,
                                        size_t cap,
                                        struct PcfgGrammar **out);

struct PcfgTrainOptions pcfg_train_options_default(void);

/**
 * Iterated re-estimation. `*out_grammar` receives the trained grammar;
 * `out_summary` may be NULL.
 *
 * # Safety
 * Handles and `options` must be valid; `out_grammar` writable.
 */
enum PcfgStatus pcfg_train(const struct PcfgGrammar *grammar,
                           const struct PcfgCorpus *corpus,
                           const struct PcfgTrainOptions *options,
                           struct PcfgGrammar **out_grammar,
                           struct PcfgTrainSummary *out_summary);

/**
 * Runs the chart-versus-enumeration comparison; `*out_mismatches` is the
 * number of quantities that differ by more than `tolerance` (relative).
 *
 * # Safety
 * Handles must be live; `out_mismatches` writable.
 */
enum PcfgStatus pcfg_check(const struct PcfgGrammar *grammar,
                           const struct PcfgCorpus *corpus,
                           size_t cap,
                           double tolerance,
                           size_t *out_mismatches);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PCFG_EM_H */

#ifndef LOHMM_H
#define LOHMM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum LohmmStatus {
  LOHMM_STATUS_OK = 0,
  LOHMM_STATUS_NULL_ARGUMENT = 1,
  LOHMM_STATUS_INVALID_UTF8 = 2,
  LOHMM_STATUS_IO = 3,
  LOHMM_STATUS_SYNTAX = 4,
  LOHMM_STATUS_INVALID_MODEL = 5,
  LOHMM_STATUS_INVALID_DATA = 6,
  LOHMM_STATUS_INTERNAL = 7,
} LohmmStatus;

/**
 * Opaque handle to a loaded, validated model.
 */
typedef struct LohmmModel LohmmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates a model from text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LohmmStatus lohmm_model_parse(const char *text, struct LohmmModel **out);

/**
 * Reads, parses and validates a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LohmmStatus lohmm_model_load(const char *path, struct LohmmModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void lohmm_model_free(struct LohmmModel *m);

/**
 * Number of abstract transitions in the model.
 *
 * # Safety
 * `m` must be a live handle or null (which yields 0).
 */
size_t lohmm_model_num_transitions(const struct LohmmModel *m);

/**
 * Writes the number of constraint violations to `count`.
 *
 * # Safety
 * `m` must be a live handle and `count` a valid pointer.
 */
enum LohmmStatus lohmm_model_validate(const struct LohmmModel *m, size_t *count);

/**
 * Serializes the model in the text format.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum LohmmStatus lohmm_model_save(const struct LohmmModel *m, char **out);

/**
 * Natural-log likelihood of one comma-separated observation sequence;
 * negative infinity if it is impossible. Atoms must be declared
 * observations.
 *
 * # Safety
 * `m` must be a live handle, `sequence` a NUL-terminated string and `out`
 * a valid pointer.
 */
enum LohmmStatus lohmm_log_likelihood(const struct LohmmModel *m,
                                      const char *sequence,
                                      double *out);

/**
 * Samples `len` observations with a seeded generator and returns them as
 * one comma-separated line.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum LohmmStatus lohmm_sample(const struct LohmmModel *m, size_t len, uint64_t seed, char **out);

/**
 * `P(head, obs | body)` for ground atoms; `obs` is null for steps out of
 * `start`.
 *
 * # Safety
 * `m` must be a live handle, the atoms NUL-terminated strings (or null
 * for `obs`) and `out` a valid pointer.
 */
enum LohmmStatus lohmm_ground_step_prob(const struct LohmmModel *m,
                                        const char *body,
                                        const char *head,
                                        const char *obs,
                                        double *out);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void lohmm_string_free(char *s);

/**
 * Message for the last failed call on this thread, or an empty string.
 * Valid until the next call on the same thread.
 */
const char *lohmm_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOHMM_H */

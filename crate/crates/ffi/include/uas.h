#ifndef UAS_H
#define UAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UasStatus {
  UAS_STATUS_OK = 0,
  UAS_STATUS_NULL_ARGUMENT = 1,
  UAS_STATUS_INVALID_UTF8 = 2,
  UAS_STATUS_PARSE_ERROR = 3,
  UAS_STATUS_INVALID_ARGUMENT = 4,
  UAS_STATUS_INTERNAL = 5,
} UasStatus;

typedef enum UasVerdict {
  UAS_VERDICT_CORRECT = 0,
  UAS_VERDICT_INCORRECT = 1,
  UAS_VERDICT_UNSURE = 2,
} UasVerdict;

typedef enum UasConsensus {
  UAS_CONSENSUS_CORRECT = 0,
  UAS_CONSENSUS_NOT_CORRECT = 1,
  UAS_CONSENSUS_PENDING = 2,
} UasConsensus;

/**
 * Opaque ontology handle.
 */
typedef struct UasOntology UasOntology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error on this thread, or null. Valid until the next call into the
 * library on this thread; do not free.
 */
const char *uas_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void uas_string_free(char *s);

/**
 * The built-in ontology. Never null.
 */
struct UasOntology *uas_ontology_default(void);

/**
 * Loads an ontology from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum UasStatus uas_ontology_from_toml(const char *toml, struct UasOntology **out);

/**
 * # Safety
 * `ontology` must come from this library and not have been freed.
 */
void uas_ontology_free(struct UasOntology *ontology);

/**
 * Strictly parses a UAS document and writes its canonical serialization.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum UasStatus uas_canonicalize(const char *json, char **out);

/**
 * Validates one manifest entry (with `uas`) under the default thresholds
 * and writes the report JSON. A rejected entry still returns `Ok`; read
 * the `verdict` field. A null ontology selects the built-in one.
 *
 * # Safety
 * `entry_json` must be a NUL-terminated string; `ontology` null or live;
 * `report_out` writable.
 */
enum UasStatus uas_validate_entry_json(const struct UasOntology *ontology,
                                       const char *entry_json,
                                       char **report_out);

/**
 * Wilson score interval. Pass `z <= 0` for the 95% default.
 *
 * # Safety
 * `lower` and `upper` must be writable.
 */
enum UasStatus uas_wilson_interval(uint64_t successes,
                                   uint64_t n,
                                   double z,
                                   double *lower,
                                   double *upper);

/**
 * Three-annotator majority over `len` verdicts.
 *
 * # Safety
 * `verdicts` must point to `len` readable values (may be null when `len`
 * is 0); `out` must be writable.
 */
enum UasStatus uas_consensus(const enum UasVerdict *verdicts, size_t len, enum UasConsensus *out);

/**
 * Template QA items for one record as chat-format JSON-Lines.
 *
 * # Safety
 * String arguments must be NUL-terminated; `ontology` null or live; `out`
 * writable.
 */
enum UasStatus uas_qa_generate(const struct UasOntology *ontology,
                               const char *record_id,
                               const char *uas_json,
                               uint64_t seed,
                               uint32_t items_per_record,
                               uint32_t options_per_mcq,
                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UAS_H */

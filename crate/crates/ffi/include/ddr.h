#ifndef DDR_H
#define DDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum DdrStatus {
  DDR_STATUS_OK = 0,
  DDR_STATUS_NULL_POINTER = 1,
  DDR_STATUS_INVALID_UTF8 = 2,
  DDR_STATUS_PARSE = 3,
  DDR_STATUS_UNKNOWN_SLOT = 4,
  DDR_STATUS_EMPTY_MATCH = 5,
  DDR_STATUS_PRECONDITION = 6,
  DDR_STATUS_SHAPE = 7,
  DDR_STATUS_IO = 8,
  DDR_STATUS_CHECKPOINT = 9,
  DDR_STATUS_BUFFER_TOO_SMALL = 10,
  DDR_STATUS_INTERNAL = 11,
} DdrStatus;

/**
 * Terminal status passed to [`ddr_compute_reward`].
 */
typedef enum DdrOutcome {
  DDR_OUTCOME_ONGOING = 0,
  DDR_OUTCOME_SUCCESS = 1,
  DDR_OUTCOME_FAILURE = 2,
} DdrOutcome;

/**
 * Opaque Q-network.
 */
typedef struct DdrNetwork DdrNetwork;

/**
 * Opaque task database.
 */
typedef struct DdrTable DdrTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *ddr_last_error_message(void);

/**
 * Loads a table from a `.json` or `.csv` file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DdrStatus ddr_table_load(const char *path, struct DdrTable **out);

/**
 * Parses a table from its JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DdrStatus ddr_table_from_json(const char *json, struct DdrTable **out);

/**
 * # Safety
 * `table` must come from a `ddr_table_*` constructor and not be used after.
 */
void ddr_table_free(struct DdrTable *table);

/**
 * Number of entries.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdrStatus ddr_table_len(const struct DdrTable *table, size_t *out);

/**
 * Entries matching the constraints.
 *
 * # Safety
 * Pointers must be valid; `constraints_json` NUL-terminated.
 */
enum DdrStatus ddr_match_count(const struct DdrTable *table,
                               const char *constraints_json,
                               size_t *out);

/**
 * Information gain in bits of requesting `slot`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum DdrStatus ddr_information_gain(const struct DdrTable *table,
                                    const char *constraints_json,
                                    const char *slot,
                                    double *out);

/**
 * Writes the most informative unconstrained slot into `buf` as a
 * NUL-terminated string, or an empty string when no slot is informative.
 *
 * # Safety
 * `buf` must hold `buf_len` bytes; other pointers must be valid.
 */
enum DdrStatus ddr_best_request_slot(const struct DdrTable *table,
                                     const char *constraints_json,
                                     char *buf,
                                     size_t buf_len);

/**
 * True on the transition into the first dead-end state.
 */
bool ddr_detect_dead_end(size_t prev_n, size_t new_n);

/**
 * Terminal bonus or per-turn cost for `outcome` with a turn limit.
 */
double ddr_compute_reward(enum DdrOutcome outcome, size_t max_turns);

/**
 * Loads the network from a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum DdrStatus ddr_network_load(const char *path, struct DdrNetwork **out);

/**
 * # Safety
 * `net` must come from [`ddr_network_load`] and not be used after.
 */
void ddr_network_free(struct DdrNetwork *net);

/**
 * Input and output sizes.
 *
 * # Safety
 * Pointers must be valid.
 */
enum DdrStatus ddr_network_dims(const struct DdrNetwork *net,
                                size_t *input_dim,
                                size_t *output_dim);

/**
 * Q-values for one state vector.
 *
 * # Safety
 * `state` must hold `state_len` values and `out` `out_len` values.
 */
enum DdrStatus ddr_q_forward(const struct DdrNetwork *net,
                             const double *state,
                             size_t state_len,
                             double *out,
                             size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDR_H */

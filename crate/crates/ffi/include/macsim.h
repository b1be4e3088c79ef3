#ifndef MACSIM_H
#define MACSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MacsimPriority {
  MacsimPriority_Urgent = 0,
  MacsimPriority_Normal = 1,
} MacsimPriority;

typedef enum MacsimProtocol {
  MacsimProtocol_Bop = 0,
  MacsimProtocol_Frog = 1,
} MacsimProtocol;

/**
 * Result of every fallible call. Anything but `Ok` leaves a description in
 * `macsim_last_error`.
 */
typedef enum MacsimStatus {
  MacsimStatus_Ok = 0,
  /**
   * Null handle, unknown key, or a value that failed to parse.
   */
  MacsimStatus_InvalidArgument = 1,
  /**
   * Settings rejected by cross-field validation.
   */
  MacsimStatus_InvalidConfig = 2,
  /**
   * The simulation faulted or panicked.
   */
  MacsimStatus_RuntimeFault = 3,
  /**
   * An internal audit (conservation, capacity, priority) tripped.
   */
  MacsimStatus_SelfCheckFailed = 4,
} MacsimStatus;

/**
 * Experiment settings under construction. Opaque.
 */
typedef struct MacsimConfig MacsimConfig;

/**
 * Finished experiment: one row per (configuration, priority class). Opaque.
 */
typedef struct MacsimResults MacsimResults;

/**
 * One summary row. Statistics that do not exist (no deliveries, or a single
 * replication) are NaN.
 */
typedef struct MacsimRow {
  enum MacsimProtocol protocol;
  enum MacsimPriority priority;
  uint32_t node_count;
  /**
   * Zero when fragmentation does not apply to the protocol.
   */
  uint32_t fragment_payload;
  double mean_delay_ms;
  double delay_ci_ms;
  double throughput_bps;
  double throughput_ci_bps;
  uint64_t delivered;
  uint64_t dropped;
  uint64_t collisions;
} MacsimRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or null if no call failed yet.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *macsim_last_error(void);

/**
 * Creates a configuration holding the benchmark defaults.
 * Free with `macsim_config_free`.
 */
struct MacsimConfig *macsim_config_new(void);

/**
 * Releases a configuration. Null is a no-op.
 *
 * # Safety
 * `cfg` must have come from `macsim_config_new` and not been freed since.
 */
void macsim_config_free(struct MacsimConfig *cfg);

/**
 * Sets one field by its configuration-file key, for example
 * `macsim_config_set(cfg, "node_count", "11")`. Later writes win.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` must be NUL-terminated.
 */
enum MacsimStatus macsim_config_set(struct MacsimConfig *cfg, const char *key, const char *value);

/**
 * Runs the configured replications and hands back a results handle through
 * `out`. On any failure `*out` is untouched. Free with
 * `macsim_results_free`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must point to writable storage.
 */
enum MacsimStatus macsim_run(const struct MacsimConfig *cfg, struct MacsimResults **out);

/**
 * Number of rows in a results handle; zero for null.
 *
 * # Safety
 * `results` must be a live handle or null.
 */
size_t macsim_results_len(const struct MacsimResults *results);

/**
 * Copies row `index` into `*row`.
 *
 * # Safety
 * `results` must be a live handle; `row` must point to writable storage.
 */
enum MacsimStatus macsim_results_row(const struct MacsimResults *results,
                                     size_t index,
                                     struct MacsimRow *row);

/**
 * Renders the results as the CSV document the command-line tool emits.
 * Returns a heap string to release with `macsim_string_free`, or null for a
 * null handle.
 *
 * # Safety
 * `results` must be a live handle or null.
 */
char *macsim_results_csv(const struct MacsimResults *results);

/**
 * Releases a string from `macsim_results_csv`. Null is a no-op.
 *
 * # Safety
 * `s` must have come from this library and not been freed since.
 */
void macsim_string_free(char *s);

/**
 * Releases a results handle. Null is a no-op.
 *
 * # Safety
 * `results` must have come from `macsim_run` and not been freed since.
 */
void macsim_results_free(struct MacsimResults *results);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MACSIM_H */

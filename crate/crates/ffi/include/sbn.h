#ifndef SBN_H
#define SBN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  /**
   * The call succeeded.
   */
  SBN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SBN_STATUS_NULL_POINTER = 1,
  /**
   * An argument was malformed: bad UTF-8, an unknown key, or a value
   * outside its domain.
   */
  SBN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The request was well-formed but no feasible plan exists.
   */
  SBN_STATUS_INFEASIBLE = 3,
  /**
   * The run aborted internally.
   */
  SBN_STATUS_FAILED = 4,
} SbnStatus;

/**
 * Opaque scenario handle. Create with [`sbn_scenario_default`],
 * [`sbn_scenario_desk`] or [`sbn_scenario_parse`]; release with
 * [`sbn_scenario_free`].
 */
typedef struct SbnScenario SbnScenario;

/**
 * Metrics of one simulation run.
 */
typedef struct {
  /**
   * Radiated plus circuit energy summed over all devices, J.
   */
  double total_energy_j;
  /**
   * Mean end-to-end latency over settled service transactions, ms.
   */
  double mean_service_latency_ms;
  /**
   * Missed service opportunities over total opportunities, in [0, 1].
   */
  double deadline_violation_rate;
  /**
   * Committed consensus rounds over attempted rounds, in [0, 1].
   */
  double consensus_success_rate;
  /**
   * Blocks appended across all chains.
   */
  uint64_t committed_blocks;
  /**
   * Forged transactions found in committed blocks plus conflicting
   * commit quorums observed by honest members. Zero on a healthy run.
   */
  uint64_t forged_tx_committed;
  /**
   * Actively radiated transmission attempts.
   */
  uint64_t active_msgs;
  /**
   * Backscatter transmission attempts.
   */
  uint64_t backscatter_msgs;
  /**
   * Share of `total_energy_j` spent inside consensus rounds, J.
   */
  double consensus_energy_j;
  /**
   * Order-sensitive digest of the full event trace; byte-for-byte
   * reproducibility means equal hashes for equal (config, run) pairs.
   */
  uint64_t trace_hash;
} SbnRunMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a scenario with the library defaults (the full-scale roster).
 */
SbnScenario *sbn_scenario_default(void);

/**
 * Builds the small fast-turnaround scenario used for benchmarks.
 */
SbnScenario *sbn_scenario_desk(void);

/**
 * Parses a full config document (the same format the CLI reads) into a
 * fresh scenario. On success writes the handle to `out`.
 *
 * # Safety
 *
 * `text` must point to a valid NUL-terminated string and `out` to
 * writable memory for one pointer; both stay borrowed only for the call.
 */
SbnStatus sbn_scenario_parse(const char *text, SbnScenario **out);

/**
 * Sets one config key, e.g. `sbn_scenario_set(s, "sim.runs", "50")`.
 * The change is validated eagerly; on error the scenario is unchanged.
 *
 * # Safety
 *
 * `scenario` must be a live handle from this library; `key` and `value`
 * must point to valid NUL-terminated strings.
 */
SbnStatus sbn_scenario_set(SbnScenario *scenario, const char *key, const char *value);

/**
 * Serializes the scenario into a config document. Returns a fresh
 * NUL-terminated string, or null when `scenario` is null; release it
 * with [`sbn_string_free`].
 *
 * # Safety
 *
 * `scenario` must be a live handle from this library or null.
 */
char *sbn_scenario_emit(const SbnScenario *scenario);

/**
 * Number of runs the scenario is configured for; 0 when `scenario` is
 * null. Valid run indices are `0..runs`.
 *
 * # Safety
 *
 * `scenario` must be a live handle from this library or null.
 */
uint32_t sbn_scenario_runs(const SbnScenario *scenario);

/**
 * Executes one run and writes its metrics to `out`. Runs are
 * independent: equal (scenario, run_index) pairs produce identical
 * metrics, and indices may be executed in any order or concurrently
 * from separate handles.
 *
 * # Safety
 *
 * `scenario` must be a live handle from this library and `out` must
 * point to writable memory for one [`SbnRunMetrics`].
 */
SbnStatus sbn_scenario_run(const SbnScenario *scenario, uint32_t run_index, SbnRunMetrics *out);

/**
 * Releases a scenario handle. Null is a no-op.
 *
 * # Safety
 *
 * `scenario` must be a handle from this library that has not been freed
 * before, or null.
 */
void sbn_scenario_free(SbnScenario *scenario);

/**
 * Releases a string obtained from [`sbn_scenario_emit`]. Null is a
 * no-op.
 *
 * # Safety
 *
 * `s` must be a string returned by this library that has not been freed
 * before, or null.
 */
void sbn_string_free(char *s);

/**
 * Computes the consensus-energy-optimal shard count for `z` base
 * stations with the given per-message energies. Writes the optimum to
 * `out_n_star` and its modeled energy to `out_energy_j` (either may be
 * null to skip it).
 *
 * # Safety
 *
 * `out_n_star` and `out_energy_j` must each be null or point to
 * writable memory of the right type.
 */
SbnStatus sbn_optimal_shards(uint32_t z,
                             double e_intra_j,
                             double e_global_j,
                             uint32_t min_shard_size,
                             uint32_t *out_n_star,
                             double *out_energy_j);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SBN_H */

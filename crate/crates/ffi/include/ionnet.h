#ifndef IONNET_H
#define IONNET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IonnetStatus {
  IONNET_STATUS_OK = 0,
  IONNET_STATUS_NULL_POINTER = 1,
  IONNET_STATUS_INVALID_UTF8 = 2,
  /**
   * Scenario text or file could not be read or parsed.
   */
  IONNET_STATUS_CONFIG = 3,
  /**
   * Scenario or request violates an invariant.
   */
  IONNET_STATUS_VALIDATION = 4,
  /**
   * Simulation or output failure.
   */
  IONNET_STATUS_RUNTIME = 5,
  /**
   * Requested summary key is absent or not numeric.
   */
  IONNET_STATUS_NOT_FOUND = 6,
  IONNET_STATUS_PANIC = 7,
} IonnetStatus;

/**
 * Opaque experiment result handle.
 */
typedef struct IonnetOutput IonnetOutput;

/**
 * Opaque scenario handle.
 */
typedef struct IonnetScenario IonnetScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on this thread.
 */
const char *ionnet_last_error(void);

/**
 * New scenario with every field at its default.
 */
struct IonnetScenario *ionnet_scenario_default(void);

/**
 * Parses scenario text into `*out`.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum IonnetStatus ionnet_scenario_parse(const char *text, struct IonnetScenario **out);

/**
 * Loads a scenario file into `*out`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum IonnetStatus ionnet_scenario_load(const char *path, struct IonnetScenario **out);

/**
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void ionnet_scenario_free(struct IonnetScenario *scenario);

/**
 * Sets the root seed, trial count and shots per point; a zero count leaves
 * that field unchanged.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum IonnetStatus ionnet_scenario_set_run(struct IonnetScenario *scenario,
                                          uint64_t seed,
                                          size_t n_trials,
                                          size_t shots_per_point);

/**
 * Resolved scenario text; release with [`ionnet_string_free`].
 *
 * # Safety
 * `scenario` must be a live handle.
 */
char *ionnet_scenario_emit(const struct IonnetScenario *scenario);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ionnet_string_free(char *s);

/**
 * Heralded-pair success probability per attempt and expected rate in 1/s.
 *
 * # Safety
 * `scenario` must be a live handle; the outputs valid pointers.
 */
enum IonnetStatus ionnet_link_budget(const struct IonnetScenario *scenario,
                                     double *success_probability_out,
                                     double *rate_hz_out);

/**
 * Runs a subcommand (its command-line name) and writes its files into
 * `out_dir`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum IonnetStatus ionnet_run_to_dir(const struct IonnetScenario *scenario,
                                    const char *subcommand,
                                    const char *out_dir);

/**
 * Runs a subcommand in memory; release the result with
 * [`ionnet_output_free`].
 *
 * # Safety
 * Pointers must be valid; `subcommand` NUL-terminated.
 */
enum IonnetStatus ionnet_run(const struct IonnetScenario *scenario,
                             const char *subcommand,
                             struct IonnetOutput **out);

/**
 * Numeric summary value of a run.
 *
 * # Safety
 * Pointers must be valid; `key` NUL-terminated.
 */
enum IonnetStatus ionnet_output_get(const struct IonnetOutput *output,
                                    const char *key,
                                    double *value_out);

/**
 * # Safety
 * `output` must come from this library and not be used afterwards.
 */
void ionnet_output_free(struct IonnetOutput *output);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IONNET_H */

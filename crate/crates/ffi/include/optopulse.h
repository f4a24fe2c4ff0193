/* Generated by cbindgen from crates/ffi/src/lib.rs. */

#ifndef OPTOPULSE_H
#define OPTOPULSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum OptopulseStatus {
  OPTOPULSE_STATUS_OK = 0,
  OPTOPULSE_STATUS_NULL_POINTER = 1,
  OPTOPULSE_STATUS_INVALID_UTF8 = 2,
  OPTOPULSE_STATUS_SCHEMA = 3,
  OPTOPULSE_STATUS_DOMAIN = 4,
  OPTOPULSE_STATUS_PRECONDITION = 5,
  OPTOPULSE_STATUS_NUMERIC = 6,
  OPTOPULSE_STATUS_IO = 7,
  OPTOPULSE_STATUS_PANIC = 8,
} OptopulseStatus;

/**
 * Opaque validated scenario.
 */
typedef struct OptopulseScenario OptopulseScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call on the same thread.
 */
const char *optopulse_last_error(void);

/**
 * Library version as a static string.
 */
const char *optopulse_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void optopulse_string_free(char *s);

/**
 * Parses and validates a scenario. Relative control file paths resolve
 * against `base_dir`, which may be null for the current directory.
 *
 * # Safety
 * `json` and `base_dir` must be null or NUL-terminated; `out` must be valid
 * for writes.
 */
enum OptopulseStatus optopulse_scenario_from_json(const char *json,
                                                  const char *base_dir,
                                                  struct OptopulseScenario **out);

/**
 * Releases a scenario handle. Null is ignored.
 *
 * # Safety
 * `scenario` must come from [`optopulse_scenario_from_json`] and not have
 * been freed.
 */
void optopulse_scenario_free(struct OptopulseScenario *scenario);

/**
 * Normalized scenario document.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be valid for writes.
 */
enum OptopulseStatus optopulse_scenario_to_json(const struct OptopulseScenario *scenario,
                                                char **out);

/**
 * Runs the scenario's engine. `summary_json` receives the run summary and
 * `trajectory_csv`, if not null, the sampled trajectory.
 *
 * # Safety
 * `scenario` must be a live handle; the output pointers must be valid for
 * writes or, for `trajectory_csv`, null.
 */
enum OptopulseStatus optopulse_simulate(const struct OptopulseScenario *scenario,
                                        char **summary_json,
                                        char **trajectory_csv);

/**
 * Compiles the linear-regime sideband sequence for the parameters in
 * `params_json` (a `SystemParams` document in units of ν; null for the
 * defaults). `sideband` is 0 for red, 1 for blue; `compensation` is 0 for a
 * concurrent correction, 1 for a separate pulse.
 *
 * # Safety
 * `params_json` must be null or NUL-terminated; `out` must be valid for
 * writes.
 */
enum OptopulseStatus optopulse_compile_linear(const char *params_json,
                                              double g,
                                              double t1,
                                              double tf,
                                              uint32_t sideband,
                                              uint32_t compensation,
                                              char **out);

/**
 * Single-photon coupling (rad/s) of the setup in `input_json`.
 *
 * # Safety
 * `input_json` must be NUL-terminated; `out` must be valid for writes.
 */
enum OptopulseStatus optopulse_derive_g0(const char *input_json, double *out);

/**
 * Minimum drive strength in units of ν for coupling `g0` (units of ν).
 * `nonlinear` selects the double-cavity threshold.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OptopulseStatus optopulse_pulse_power_requirement(double g0, bool nonlinear, double *out);

/**
 * Feasibility table as a JSON array of `{name, value, unit, note}`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum OptopulseStatus optopulse_feasibility_table(char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTOPULSE_H */

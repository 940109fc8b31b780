/* C interface to the hybrid feedback-optimization rendezvous simulator. */

#ifndef HFO_H
#define HFO_H

/* Generated by cbindgen from the hfo-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum HfoStatus {
  HFO_STATUS_OK = 0,
  // A required pointer argument was null.
  HFO_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  HFO_STATUS_UTF8 = 2,
  // The configuration could not be read or validated.
  HFO_STATUS_CONFIG = 3,
  // An argument was out of range.
  HFO_STATUS_INVALID_ARG = 4,
  // The simulation or analysis failed at runtime.
  HFO_STATUS_RUNTIME = 5,
  // The configured stepsize is outside the contraction hypothesis.
  HFO_STATUS_STEPSIZE_INVALID = 6,
  // A panic was caught at the FFI boundary.
  HFO_STATUS_PANIC = 7,
} HfoStatus;

// Opaque run configuration.
typedef struct HfoConfig HfoConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. Never null;
// empty when no failure has occurred. The pointer is invalidated by the
// next failing call on the same thread.
const char *hfo_last_error(void);

// Create the built-in reference configuration. Returns null only if
// construction panics. Free with `hfo_config_free`.
struct HfoConfig *hfo_config_default(void);

// Load a configuration from a TOML file.
//
// # Safety
// `path` must point to a NUL-terminated string; `out` must be a valid
// location to store the handle.
enum HfoStatus hfo_config_load(const char *path, struct HfoConfig **out);

// Release a configuration handle. Null is ignored.
//
// # Safety
// `cfg` must be null or a handle from this library, not yet freed.
void hfo_config_free(struct HfoConfig *cfg);

// Override the run horizon, seconds.
//
// # Safety
// `cfg` must be a valid handle from this library.
enum HfoStatus hfo_config_set_horizon(struct HfoConfig *cfg, double horizon);

// Override the analysis window used for the limiting error, seconds.
//
// # Safety
// `cfg` must be a valid handle from this library.
enum HfoStatus hfo_config_set_window(struct HfoConfig *cfg, double window);

// Override the base seed.
//
// # Safety
// `cfg` must be a valid handle from this library.
enum HfoStatus hfo_config_set_seed(struct HfoConfig *cfg, uint64_t seed);

// Copy the synthesized feedback gain (3x6, row-major, 18 values) and the
// closed-loop matrix (6x6, row-major, 36 values). Either output pointer
// may be null to skip it.
//
// # Safety
// `cfg` must be a valid handle; non-null outputs must have the stated
// capacity.
enum HfoStatus hfo_synthesize_gains(const struct HfoConfig *cfg, double *k_out, double *a_stab_out);

// Report the gradient-iteration constants for the configured stepsize:
// the curvature constant L, the per-step contraction factor q, and the
// largest admissible stepsize. Values are always written; the return is
// `Ok` only when the contraction hypothesis holds.
//
// # Safety
// `cfg` must be a valid handle; non-null outputs must point to doubles.
enum HfoStatus hfo_stepsize_constants(const struct HfoConfig *cfg,
                                      double *l_out,
                                      double *q_out,
                                      double *gamma_max_out);

// Simulate the unperturbed scenario and report the limiting rendezvous
// error (meters) and the disturbance-reduction ratio against the
// per-component amplitude (NaN when the disturbance has no amplitude).
// Either output pointer may be null to skip it.
//
// # Safety
// `cfg` must be a valid handle; non-null outputs must point to doubles.
enum HfoStatus hfo_run_nominal(const struct HfoConfig *cfg,
                               double *asymptotic_err_out,
                               double *reduction_out);

// Simulate the unperturbed scenario and write the trajectory CSV.
//
// # Safety
// `cfg` must be a valid handle; `path` must be a NUL-terminated string.
enum HfoStatus hfo_simulate_csv(const struct HfoConfig *cfg, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HFO_H */

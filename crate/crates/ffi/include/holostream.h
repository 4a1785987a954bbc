#ifndef HOLOSTREAM_H
#define HOLOSTREAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_CONFIG = 3,
  HS_STATUS_DIMENSION = 4,
  HS_STATUS_NUMERICAL = 5,
  HS_STATUS_IO = 6,
  HS_STATUS_MISSING_CHECKPOINT = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  HS_STATUS_INTERNAL = 8,
} HsStatus;

typedef enum HsSolveStatus {
  HS_SOLVE_STATUS_FEASIBLE = 0,
  HS_SOLVE_STATUS_INFEASIBLE = 1,
  HS_SOLVE_STATUS_NUMERICAL_FAILURE = 2,
} HsSolveStatus;

/**
 * Simulator for one scheme.
 */
typedef struct HsEnv HsEnv;

/**
 * Trained policy loaded from a checkpoint.
 */
typedef struct HsPolicy HsPolicy;

/**
 * Outcome of one slot.
 */
typedef struct HsStepResult {
  double reward;
  /**
   * Slot just played (1-based).
   */
  size_t slot;
  bool feasible;
  bool done;
} HsStepResult;

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hs_last_error(void);

/**
 * Creates a simulator. `config_toml` is the text of a config file (null
 * for defaults); `scheme` is one of "proposed", "B1" … "B4".
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum HsStatus hs_env_new(const char *config_toml, const char *scheme, struct HsEnv **out);

/**
 * # Safety
 * `env` must come from [`hs_env_new`] and not be used afterwards. Null is ignored.
 */
void hs_env_free(struct HsEnv *env);

/**
 * Observation length, number of action heads and choices per head.
 *
 * # Safety
 * `env` must be a live handle; outputs must be writable.
 */
enum HsStatus hs_env_dims(const struct HsEnv *env, size_t *obs_len, size_t *heads, size_t *choices);

/**
 * Starts episode `episode` and writes the first observation.
 *
 * # Safety
 * `env` must be a live handle; `obs` must hold `obs_len` doubles.
 */
enum HsStatus hs_env_reset(struct HsEnv *env, uint64_t episode, double *obs, size_t obs_len);

/**
 * Plays one slot with one choice per head and writes the next observation.
 *
 * # Safety
 * `env` must be a live handle; `choices` must hold `heads` entries, `obs`
 * must hold `obs_len` doubles, `result` must be writable.
 */
enum HsStatus hs_env_step(struct HsEnv *env,
                          const size_t *choices,
                          size_t heads,
                          double *obs,
                          size_t obs_len,
                          struct HsStepResult *result);

/**
 * Loads a policy checkpoint written by `holostream train`.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum HsStatus hs_policy_load(const char *path, struct HsPolicy **out);

/**
 * # Safety
 * `policy` must come from [`hs_policy_load`] and not be used afterwards. Null is ignored.
 */
void hs_policy_free(struct HsPolicy *policy);

/**
 * Most likely choice of every head for `obs`.
 *
 * # Safety
 * `policy` must be a live handle; `obs` must hold `obs_len` doubles and
 * `choices` must hold `heads` entries.
 */
enum HsStatus hs_policy_act(const struct HsPolicy *policy,
                            const double *obs,
                            size_t obs_len,
                            size_t *choices,
                            size_t heads);

/**
 * Minimum SINR for delivering `payload_bits` within `tau` after `decode_s`
 * of decoding over `bandwidth_hz`, floored at `xi`. `*feasible` is false
 * (and `*out` untouched) when decoding alone overruns the slot.
 *
 * # Safety
 * `out` and `feasible` must be writable.
 */
enum HsStatus hs_required_sinr(double payload_bits,
                               double decode_s,
                               double tau,
                               double bandwidth_hz,
                               double xi,
                               double *out,
                               bool *feasible);

/**
 * SINR of every user for channel `h` and beamformers `w` (both
 * `2·users·aps·antennas` doubles), noise power `noise_psd · bandwidth_hz`.
 *
 * # Safety
 * Arrays must have the stated lengths; `out` must hold `users` doubles.
 */
enum HsStatus hs_sinr(const double *h,
                      const double *w,
                      size_t users,
                      size_t aps,
                      size_t antennas,
                      double noise_psd,
                      double bandwidth_hz,
                      double *out);

/**
 * Minimum-power beamformers meeting per-user SINR `targets` under per-AP
 * power caps `caps` (W). On `HS_SOLVE_STATUS_FEASIBLE`, `w_out` receives
 * the beamformers and `*total_power` their power; otherwise both are zero.
 *
 * # Safety
 * `h` and `w_out` hold `2·users·aps·antennas` doubles, `targets` holds
 * `users`, `caps` holds `aps`; scalar outputs must be writable.
 */
enum HsStatus hs_solve_beamforming(const double *h,
                                   size_t users,
                                   size_t aps,
                                   size_t antennas,
                                   const double *targets,
                                   const double *caps,
                                   double noise_psd,
                                   double bandwidth_hz,
                                   double *w_out,
                                   double *total_power,
                                   enum HsSolveStatus *status);

#endif  /* HOLOSTREAM_H */

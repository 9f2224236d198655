#ifndef CARRYBAR_H
#define CARRYBAR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_POINTER = 1,
  CB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Output buffer has the wrong length.
   */
  CB_STATUS_BUFFER_SIZE = 3,
  CB_STATUS_CONFIG = 4,
  /**
   * Query outside the terrain bounds.
   */
  CB_STATUS_OUT_OF_BOUNDS = 5,
  /**
   * `step` before `reset` or after the episode ended.
   */
  CB_STATUS_INVALID_STATE = 6,
  CB_STATUS_INTERNAL = 7,
} CbStatus;

/**
 * Episode end reported by [`cb_env_step`].
 */
typedef enum CbTermination {
  CB_TERMINATION_RUNNING = 0,
  CB_TERMINATION_GOAL = 1,
  CB_TERMINATION_TIMEOUT = 2,
  CB_TERMINATION_TILT_PROXY = 3,
  CB_TERMINATION_HEIGHT_PROXY = 4,
} CbTermination;

typedef enum CbScenario {
  CB_SCENARIO_EMPTY = 0,
  CB_SCENARIO_CORRIDOR = 1,
  CB_SCENARIO_BOXES = 2,
} CbScenario;

/**
 * Opaque environment handle.
 */
typedef struct CbEnv CbEnv;

/**
 * Opaque terrain handle.
 */
typedef struct CbTerrain CbTerrain;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cb_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cb_version(void);

/**
 * Creates an environment on a benchmark scenario (a [`CbScenario`] value).
 * `config_toml` may be null for defaults.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be a
 * valid pointer.
 */
enum CbStatus cb_env_new(uint32_t scenario_kind,
                         bool dynamic,
                         uint64_t seed,
                         const char *config_toml,
                         struct CbEnv **out);

/**
 * # Safety
 * `env` must be null or a handle from [`cb_env_new`] not yet freed.
 */
void cb_env_free(struct CbEnv *env);

/**
 * Number of values in one observation.
 *
 * # Safety
 * `env` must be a live handle; `out` a valid pointer.
 */
enum CbStatus cb_env_observation_len(const struct CbEnv *env, size_t *out);

/**
 * Resets the episode and writes the first observation into `obs[0..len]`.
 *
 * # Safety
 * `env` must be a live handle; `obs` must point to `len` writable doubles.
 */
enum CbStatus cb_env_reset(struct CbEnv *env, double *obs, size_t len);

/**
 * Advances one control step with a 6-value action (agent1 vx, vy, wz then
 * agent2). Writes the next observation, the total reward and the episode
 * end state. `reward` and `termination` may be null.
 *
 * # Safety
 * `env` must be a live handle, `action` must point to 6 doubles and `obs`
 * to `len` writable doubles.
 */
enum CbStatus cb_env_step(struct CbEnv *env,
                          const double *action,
                          double *obs,
                          size_t len,
                          double *reward,
                          enum CbTermination *termination);

/**
 * Object pose `[x, y, yaw]` in the world frame.
 *
 * # Safety
 * `env` must be a live handle; `out` must point to 3 writable doubles.
 */
enum CbStatus cb_env_object_pose(const struct CbEnv *env, double *out);

/**
 * Maps each of the 6 raw action values through `v_max * tanh(x / v_max)`; NaN
 * becomes 0.
 *
 * # Safety
 * `raw` and `out` must each point to 6 doubles; they may alias.
 */
enum CbStatus cb_bound_action(const double *raw, double v_max, double *out);

/**
 * Generates the curriculum terrain from the `[terrain]` config section with
 * the given seed.
 *
 * # Safety
 * `config_toml` must be null or NUL-terminated; `out` must be valid.
 */
enum CbStatus cb_terrain_generate(uint64_t seed, const char *config_toml, struct CbTerrain **out);

/**
 * Terrain of a benchmark scenario (a [`CbScenario`] value).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CbStatus cb_terrain_scenario(uint32_t scenario_kind, bool dynamic, struct CbTerrain **out);

/**
 * # Safety
 * `terrain` must be null or a live handle.
 */
void cb_terrain_free(struct CbTerrain *terrain);

/**
 * Ground height at `(x, y)` and time `t`.
 *
 * # Safety
 * `terrain` must be a live handle; `out` a valid pointer.
 */
enum CbStatus cb_terrain_height_at(const struct CbTerrain *terrain,
                                   double x,
                                   double y,
                                   double t,
                                   double *out);

/**
 * Number of box obstacles.
 *
 * # Safety
 * `terrain` must be a live handle; `out` a valid pointer.
 */
enum CbStatus cb_terrain_n_obstacles(const struct CbTerrain *terrain, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARRYBAR_H */

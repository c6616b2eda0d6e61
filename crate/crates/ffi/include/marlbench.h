#ifndef MARLBENCH_H
#define MARLBENCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum MarlStatus {
  MARL_STATUS_OK = 0,
  MARL_STATUS_NULL_POINTER = 1,
  MARL_STATUS_INVALID_UTF8 = 2,
  MARL_STATUS_UNKNOWN_TASK = 3,
  MARL_STATUS_INVALID_ACTION = 4,
  MARL_STATUS_BUFFER_TOO_SMALL = 5,
  MARL_STATUS_NOT_RESET = 6,
  MARL_STATUS_EPISODE_FINISHED = 7,
  MARL_STATUS_INVALID_ARGUMENT = 8,
  MARL_STATUS_PANIC = 9,
} MarlStatus;

/**
 * Opaque environment handle.
 */
typedef struct MarlEnv MarlEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *marl_version(void);

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *marl_last_error(void);

/**
 * Create the environment registered under `name`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum MarlStatus marl_env_make(const char *name, struct MarlEnv **out);

/**
 * Release an environment. Null is ignored.
 *
 * # Safety
 * `env` must come from [`marl_env_make`] and not be used afterwards.
 */
void marl_env_free(struct MarlEnv *env);

/**
 * Number of agents.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum MarlStatus marl_env_n_agents(const struct MarlEnv *env, size_t *out);

/**
 * Length of the concatenated joint observation.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum MarlStatus marl_env_obs_len(const struct MarlEnv *env, size_t *out);

/**
 * Observation length of one agent.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum MarlStatus marl_env_agent_obs_len(const struct MarlEnv *env, size_t agent, size_t *out);

/**
 * Number of discrete actions of one agent.
 *
 * # Safety
 * `env` must be a live handle and `out` writable.
 */
enum MarlStatus marl_env_action_size(const struct MarlEnv *env, size_t agent, size_t *out);

/**
 * Start an episode and write the joint observation to `obs_out`, which
 * holds `obs_len` floats.
 *
 * # Safety
 * `env` must be a live handle; `obs_out` must point to `obs_len` floats.
 */
enum MarlStatus marl_env_reset(struct MarlEnv *env, uint64_t seed, float *obs_out, size_t obs_len);

/**
 * Advance one step with one action per agent.
 *
 * Writes the next joint observation, each agent's reward and done flag,
 * and whether the episode ended on the time limit. `truncated_out` may be
 * null.
 *
 * # Safety
 * `env` must be a live handle; `actions` must point to `n_agents` values,
 * `rewards_out` and `dones_out` to `n_agents` elements and `obs_out` to
 * `obs_len` floats.
 */
enum MarlStatus marl_env_step(struct MarlEnv *env,
                              const uint32_t *actions,
                              size_t n_agents,
                              float *obs_out,
                              size_t obs_len,
                              double *rewards_out,
                              bool *dones_out,
                              bool *truncated_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARLBENCH_H */

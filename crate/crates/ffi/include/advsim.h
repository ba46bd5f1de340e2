#ifndef ADVSIM_H
#define ADVSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible function.
typedef enum AdvsimStatus {
  ADVSIM_STATUS_OK = 0,
  // A required pointer argument was NULL.
  ADVSIM_STATUS_NULL_POINTER = 1,
  // Bad argument: wrong array length, non-UTF-8 string, unknown name.
  ADVSIM_STATUS_INVALID_ARGUMENT = 2,
  // Operation precondition violated inside the core.
  ADVSIM_STATUS_CONTRACT = 3,
  // The simulation produced a non-finite state.
  ADVSIM_STATUS_DIVERGED = 4,
  // The episode is over; call `advsim_env_reset`.
  ADVSIM_STATUS_EPISODE_DONE = 5,
  // File missing or unreadable.
  ADVSIM_STATUS_IO = 6,
  // File contents malformed or of an unsupported version.
  ADVSIM_STATUS_FORMAT = 7,
  ADVSIM_STATUS_CONFIG = 8,
  ADVSIM_STATUS_NO_DATA = 9,
  ADVSIM_STATUS_PANIC = 10,
} AdvsimStatus;

// Opaque trained discriminator.
typedef struct AdvsimDiscriminator AdvsimDiscriminator;

// Opaque environment: a system with an optional target gap, its current
// state, RNG streams and task reward.
typedef struct AdvsimEnv AdvsimEnv;

// Opaque learned parameter function.
typedef struct AdvsimParamFn AdvsimParamFn;

// Opaque control policy.
typedef struct AdvsimPolicy AdvsimPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread ("" after a success).
// The pointer stays valid until the next call into the library on this
// thread.
const char *advsim_last_error(void);

// Library version as a static NUL-terminated string.
const char *advsim_version(void);

// Discriminator-derived reward log(D / (1 - D)), with D clamped away from 0
// and 1. Non-finite input yields NaN.
double advsim_gan_reward(double score);

// Adaptive alive bonus ln(l_i / l_r). Both lengths must be positive.
enum AdvsimStatus advsim_alive_bonus(double l_i, double l_r, double *out);

// Create an environment. `env_name`: "slider" | "pendulum" | "hopper1d";
// `gap_name`: "none" | "power" | "heavy" | "deform" (shipped magnitudes).
// The environment is reset with `seed`.
enum AdvsimStatus advsim_env_new(const char *env_name,
                                 const char *gap_name,
                                 uint64_t seed,
                                 struct AdvsimEnv **out);

// Release an environment (NULL is ignored).
void advsim_env_free(struct AdvsimEnv *env);

// Observation dimension (0 for NULL).
size_t advsim_env_obs_dim(const struct AdvsimEnv *env);

// Action dimension (0 for NULL).
size_t advsim_env_action_dim(const struct AdvsimEnv *env);

// Total steps taken on this environment since creation (0 for NULL).
uint64_t advsim_env_step_count(const struct AdvsimEnv *env);

// Start a new episode and write the (noisy) initial observation.
enum AdvsimStatus advsim_env_reset(struct AdvsimEnv *env, double *obs_out, size_t obs_len);

// Current observation without stepping.
enum AdvsimStatus advsim_env_observation(const struct AdvsimEnv *env,
                                         double *obs_out,
                                         size_t obs_len);

// Advance one control step. When `param_fn` is non-NULL the step uses the
// hybrid simulator: parameters are sampled from the function at the current
// state and action (its mean when `stochastic` is 0) and override the
// system's constants; the environment's gap is ignored in that case and
// the step is not counted by `advsim_env_step_count`, which only counts
// steps of the real (possibly gapped) system.
// Writes the next observation, the task reward and whether the episode
// ended (1) or not (0).
enum AdvsimStatus advsim_env_step(struct AdvsimEnv *env,
                                  const double *action,
                                  size_t action_len,
                                  const struct AdvsimParamFn *param_fn,
                                  int32_t stochastic,
                                  double *obs_out,
                                  size_t obs_len,
                                  double *reward_out,
                                  int32_t *done_out);

// Load a parameter-function checkpoint (JSON written by `advsim identify`).
enum AdvsimStatus advsim_param_fn_load(const char *file, struct AdvsimParamFn **out);

// Release a parameter function (NULL is ignored).
void advsim_param_fn_free(struct AdvsimParamFn *f);

// Number of parameters the function outputs (0 for NULL).
size_t advsim_param_fn_output_dim(const struct AdvsimParamFn *f);

// Input dimension: state features followed by the action (0 for NULL).
size_t advsim_param_fn_input_dim(const struct AdvsimParamFn *f);

// Mean parameters (after squashing into their physical ranges, in layout
// order) at the given noise-free state features and action.
enum AdvsimStatus advsim_param_fn_mean(const struct AdvsimParamFn *f,
                                       const double *input,
                                       size_t input_len,
                                       double *params_out,
                                       size_t params_len);

// Load a discriminator checkpoint (JSON written by `advsim identify`).
enum AdvsimStatus advsim_discriminator_load(const char *file, struct AdvsimDiscriminator **out);

// Release a discriminator (NULL is ignored).
void advsim_discriminator_free(struct AdvsimDiscriminator *d);

// Length of the concatenated (obs, action, next_obs) input (0 for NULL).
size_t advsim_discriminator_input_dim(const struct AdvsimDiscriminator *d);

// Probability that the tuple came from the target system, clamped to
// [1e-6, 1 - 1e-6]. `tuple` is obs, action and next_obs concatenated.
enum AdvsimStatus advsim_discriminator_score(const struct AdvsimDiscriminator *d,
                                             const double *tuple,
                                             size_t tuple_len,
                                             double *score_out);

// Load a policy checkpoint (JSON written by the CLI).
enum AdvsimStatus advsim_policy_load(const char *file, struct AdvsimPolicy **out);

// Release a policy (NULL is ignored).
void advsim_policy_free(struct AdvsimPolicy *p);

// Observation dimension the policy expects (0 for NULL).
size_t advsim_policy_obs_dim(const struct AdvsimPolicy *p);

// Action dimension the policy produces (0 for NULL).
size_t advsim_policy_action_dim(const struct AdvsimPolicy *p);

// Deterministic (mean) action for an observation.
enum AdvsimStatus advsim_policy_act(const struct AdvsimPolicy *p,
                                    const double *obs,
                                    size_t obs_len,
                                    double *action_out,
                                    size_t action_len);

// Score one tuple given as separate arrays; convenience over
// [`advsim_discriminator_score`].
enum AdvsimStatus advsim_discriminator_score_parts(const struct AdvsimDiscriminator *d,
                                                   const double *obs,
                                                   size_t obs_len,
                                                   const double *action,
                                                   size_t action_len,
                                                   const double *next_obs,
                                                   size_t next_obs_len,
                                                   double *score_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVSIM_H */

#include <math.h>
#include <stdio.h>
#include "advsim.h"

int main(void) {
    AdvsimEnv *env = NULL;
    if (advsim_env_new("slider", "power", 1, &env) != ADVSIM_STATUS_OK) {
        fprintf(stderr, "env_new: %s\n", advsim_last_error());
        return 1;
    }
    double obs[2], action[1] = {1.0}, reward = 0.0;
    int done = 0;
    advsim_env_reset(env, obs, 2);
    for (int t = 0; t < 10 && !done; ++t) {
        if (advsim_env_step(env, action, 1, NULL, 0, obs, 2, &reward, &done) != ADVSIM_STATUS_OK) {
            fprintf(stderr, "step: %s\n", advsim_last_error());
            return 1;
        }
    }
    if (advsim_env_step_count(env) != 10) return 1;
    if (advsim_env_step(env, action, 3, NULL, 0, obs, 2, &reward, &done) != ADVSIM_STATUS_INVALID_ARGUMENT) return 1;
    advsim_env_free(env);
    double b = 0.0;
    if (advsim_alive_bonus(2.0, 1.0, &b) != ADVSIM_STATUS_OK || fabs(b - log(2.0)) > 1e-12) return 1;
    if (advsim_gan_reward(0.5) != 0.0) return 1;
    printf("ok\n");
    return 0;
}
